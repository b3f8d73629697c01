"""Synthetic EC vs FPCA vs raw-GRU benchmark on the two-view ARMA generator."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd

from ..dataset import MultiViewDataset
from ..features import FeatureExtractor
from ..synth import SynthConfig, generate_dataset
from .model import TrainConfig, train_deepida_gru

BENCH_METHODS = ("deepida_ec", "deepida_fpc", "deepida_gru")
_EXTRACTOR = {"deepida_ec": "ec", "deepida_fpc": "fpca", "deepida_gru": "none"}


@dataclass(frozen=True)
class BenchConfig:
    n_subjects: int = 200
    p1: int = 20
    p2: int = 20
    t: int = 20
    test_fraction: float = 0.2
    n_thresholds: int = 100
    n_components: int = 3
    train: TrainConfig = TrainConfig()
    seed: int = 0


def stratified_split(labels, test_fraction: float, rng) -> tuple[np.ndarray, np.ndarray]:
    labels = np.asarray(labels)
    test = []
    for c in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == c))
        n_test = int(round(test_fraction * idx.size))
        # keep at least one subject of each class on both sides
        n_test = min(max(n_test, 1), idx.size - 1)
        test.append(idx[:n_test])
    test = np.sort(np.concatenate(test))
    train = np.setdiff1d(np.arange(labels.size), test)
    return train, test


def cells_for(epsilons=(), etas=(), include_null: bool = False) -> list[tuple[float, float]]:
    cells = [(float(e), 0.0) for e in epsilons if e > 0] + [(0.0, float(h)) for h in etas if h > 0]
    if include_null:
        cells.insert(0, (0.0, 0.0))
    return cells


def _replicate_seed(base: int, eps: float, eta: float, rep: int) -> int:
    key = [int(base), int(round(eps * 1e6)), int(round(eta * 1e6)), int(rep)]
    return int(np.random.SeedSequence(key).generate_state(1)[0])


def run_method(method: str, train: MultiViewDataset, test: MultiViewDataset, config: BenchConfig,
               seed: int) -> float:
    ext_name = _EXTRACTOR[method]
    tr_views, te_views = [], []
    for v_tr, v_te in zip(train.views, test.views):
        ext = FeatureExtractor(ext_name, n_thresholds=config.n_thresholds, n_components=config.n_components)
        ext.fit(v_tr)
        tr_views.append(ext.transform(v_tr))
        te_views.append(ext.transform(v_te))
    model = train_deepida_gru(train.with_views(tr_views), config.train.with_seed(seed))
    return model.accuracy(test.with_views(te_views))


def _one(cell, rep, methods, config: BenchConfig):
    eps, eta = cell
    seed = _replicate_seed(config.seed, eps, eta, rep)
    data = generate_dataset(SynthConfig(config.n_subjects, config.p1, config.p2, config.t, eps, eta, seed))
    rng = np.random.default_rng(seed)
    tr, te = stratified_split(data.labels, config.test_fraction, rng)
    train, test = data.subset(tr), data.subset(te)
    return [(m, eps, eta, rep, run_method(m, train, test, config, seed)) for m in methods]


def synth_benchmark(cells, replicates: int = 20, methods=BENCH_METHODS, config: BenchConfig = BenchConfig(),
                    jobs: int = 1, progress=None) -> pd.DataFrame:
    """Test accuracy per (method, epsilon, eta, replicate), ready for box plots."""
    for eps, eta in cells:
        if eps > 0 and eta > 0:
            raise ValueError("cells vary either the covariance (epsilon) or the ARMA parameters (eta), not both")
    unknown = [m for m in methods if m not in BENCH_METHODS]
    if unknown:
        raise ValueError(f"unknown benchmark method {unknown[0]!r}")
    tasks = [(cell, rep) for cell in cells for rep in range(replicates)]

    def work(task):
        rows = _one(task[0], task[1], methods, config)
        if progress is not None:
            progress(rows)
        return rows

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(work, tasks))
    else:
        results = [work(t) for t in tasks]
    rows = [r for rs in results for r in rs]
    return pd.DataFrame(rows, columns=["method", "epsilon", "eta", "replicate", "accuracy"])
