from .bench import BENCH_METHODS, BenchConfig, synth_benchmark
from .cv import CvReport, ExperimentConfig, make_folds, method_extractors, run_cv
from .metrics import MetricsReport, metrics
from .model import DeepIdaModel, TrainConfig, train_deepida_gru

__all__ = [
    "BENCH_METHODS", "BenchConfig", "synth_benchmark", "CvReport", "ExperimentConfig", "make_folds",
    "method_extractors", "run_cv", "MetricsReport", "metrics", "DeepIdaModel", "TrainConfig",
    "train_deepida_gru",
]
