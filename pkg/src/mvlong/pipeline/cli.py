"""Command line entry point.

Every subcommand accepts ``--config file.json``; explicit flags override keys
from the file.  Each run writes ``manifest.json`` next to its outputs.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import subprocess
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np
import pandas as pd

from .. import __version__
from ..dataset import (load_dataset, load_labels, load_raw_view, log_pseudo, save_dataset, save_view,
                       variance_filter, window_average, zero_fraction_filter, MultiViewDataset)
from ..features import FeatureExtractor
from ..select import BootstrapPlan, VariableScoreTable, dgb_rank, jpta_fit, lmm_view_pvalues
from ..synth import SynthConfig, generate_dataset
from .bench import BENCH_METHODS, BenchConfig, cells_for, synth_benchmark
from .cv import ExperimentConfig, method_extractors, run_cv
from .model import TrainConfig


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _keep_list(text: str) -> list[int | None]:
    return [None if x.strip() in ("", "all") else int(x) for x in text.split(",")]


def git_version() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], capture_output=True,
                             text=True, timeout=5, cwd=Path(__file__).resolve().parent)
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()


def write_manifest(out: Path, command: str, cfg: dict, seeds, started: float, extra: dict | None = None):
    manifest = {
        "command": command,
        "version": git_version(),
        "seeds": list(seeds),
        "config": cfg,
        "config_sha256": config_hash(cfg),
        "wall_time_seconds": time.perf_counter() - started,
    }
    manifest.update(extra or {})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str))


def _merge(args: argparse.Namespace, keys) -> dict:
    """Config file values overridden by any flag the user actually passed."""
    cfg: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise FileNotFoundError(f"no such file: {path}")
        cfg = json.loads(path.read_text())
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
    for key in keys:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _require(cfg: dict, *keys):
    for k in keys:
        if cfg.get(k) in (None, [], ""):
            raise UsageError(f"missing required setting {k!r} (flag or config key)")


def _out_dir(cfg: dict) -> Path:
    _require(cfg, "out")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(cfg: dict) -> MultiViewDataset:
    _require(cfg, "views", "labels")
    return load_dataset(cfg["views"], cfg["labels"])


# ---------------------------------------------------------------------------
# subcommands


def cmd_preprocess(args, started):
    cfg = _merge(args, ["views", "labels", "out", "window_len", "groups", "pseudocount", "max_zero_frac",
                        "variance_cutoff", "log"])
    _require(cfg, "views", "labels")
    out = _out_dir(cfg)
    subjects, _, _ = load_labels(cfg["labels"])
    report = {}
    for path in cfg["views"]:
        view = load_raw_view(path, subjects)
        kept_zero = kept_var = None
        if cfg.get("max_zero_frac") is not None:
            view, kept_zero = zero_fraction_filter(view, float(cfg["max_zero_frac"]))
        if cfg.get("log"):
            view = log_pseudo(view, float(cfg.get("pseudocount") or 1.0))
        if cfg.get("variance_cutoff") is not None:
            view, kept_var = variance_filter(view, float(cfg["variance_cutoff"]))
        if cfg.get("window_len"):
            view = window_average(view, int(cfg["window_len"]), int(cfg.get("groups") or 1), subjects)
        elif view.mask is not None:
            raise UsageError(f"{path} has missing cells; pass --window-len/--groups to aggregate them")
        name = Path(path).name.split(".")[0]
        save_view(view, subjects, out / f"{name}.csv")
        report[name] = {"variables": view.n_variables, "times": view.n_times,
                        "zero_filter_kept": kept_zero is not None and len(kept_zero),
                        "variance_filter_kept": kept_var is not None and len(kept_var)}
    pd.read_csv(cfg["labels"], dtype=str).to_csv(out / "labels.csv", index=False)
    write_manifest(out, "preprocess", cfg, [], started, {"views": report})


def cmd_synth_gen(args, started):
    cfg = _merge(args, ["epsilon", "eta", "seed", "n", "p1", "p2", "t", "burn_in", "out"])
    out = _out_dir(cfg)
    sc = SynthConfig(int(cfg.get("n", 500)), int(cfg.get("p1", 250)), int(cfg.get("p2", 250)),
                     int(cfg.get("t", 20)), float(cfg.get("epsilon", 0.0)), float(cfg.get("eta", 0.0)),
                     int(cfg.get("seed", 0)), int(cfg.get("burn_in", 0)))
    data = generate_dataset(sc)
    save_dataset(data, out)
    write_manifest(out, "synth-gen", cfg, [sc.seed], started)


def cmd_extract(args, started):
    cfg = _merge(args, ["views", "labels", "out", "method", "thresholds", "components", "association",
                        "standardize"])
    out = _out_dir(cfg)
    data = _load(cfg)
    method = cfg.get("method", "none")
    for name, view in zip(data.view_names, data.views):
        ext = FeatureExtractor(method if view.is_longitudinal or method in ("none", "mean") else "none",
                               n_thresholds=int(cfg.get("thresholds") or 100),
                               n_components=int(cfg.get("components") or 3),
                               association=cfg.get("association") or "correlation",
                               standardize_features=bool(cfg.get("standardize")))
        feats = ext.fit(view).transform(view)
        save_view(feats, data.subject_ids, out / f"{name}.csv")
        table = pd.DataFrame(feats.values[:, :, 0], columns=feats.variable_names)
        table.insert(0, "subject", data.subject_ids)
        table.insert(1, "label", [data.class_names[c] for c in data.labels])
        table.to_csv(out / f"features_{name}.csv", index=False)
    pd.DataFrame({"subject": data.subject_ids, "label": [data.class_names[c] for c in data.labels]}).to_csv(
        out / "labels.csv", index=False)
    write_manifest(out, "extract", cfg, [], started)


def cmd_rank(args, started):
    cfg = _merge(args, ["views", "labels", "out", "method", "replicates", "seed", "jpta_c", "train"])
    out = _out_dir(cfg)
    data = _load(cfg)
    method = cfg.get("method", "lmm")
    tables: list[VariableScoreTable] = []
    if method == "lmm":
        for d, v in enumerate(data.views):
            p, flags = lmm_view_pvalues(v, data.labels)
            tables.append(VariableScoreTable(d, list(v.variable_names), p, "lmm", flags=flags,
                                             view_name=data.view_names[d]))
    elif method == "jpta":
        longit = [d for d, v in enumerate(data.views) if v.is_longitudinal]
        if len(longit) != 2:
            raise UsageError("jpta ranking needs exactly two longitudinal views")
        a, b = longit
        model = jpta_fit(data.views[a].values, data.views[b].values, c=float(cfg.get("jpta_c", 10.0)))
        for d, w in ((a, model.u), (b, model.v)):
            v = data.views[d]
            tables.append(VariableScoreTable(d, list(v.variable_names), np.abs(w), "jpta",
                                             view_name=data.view_names[d]))
    elif method == "dgb":
        train = TrainConfig.from_dict(cfg.get("train") or {})
        plan = BootstrapPlan.create(data.n_subjects, [v.n_variables for v in data.views],
                                    int(cfg.get("replicates", 20)), int(cfg.get("seed", 0)))
        tables = dgb_rank(data, plan, train)
    else:
        raise UsageError(f"unknown ranking method {method!r}")
    for t in tables:
        t.to_frame().to_csv(out / f"scores_{t.view_name}.csv", index=False)
    write_manifest(out, "rank", cfg, [cfg.get("seed", 0)], started, {"folds": 1})


CV_KEYS = [f.name for f in fields(ExperimentConfig)]


def experiment_from(cfg: dict, data: MultiViewDataset) -> ExperimentConfig:
    exp = {k: cfg[k] for k in CV_KEYS if k in cfg}
    if "method" in cfg and "extractors" not in cfg:
        exp["extractors"] = method_extractors(cfg["method"], data)
    if "epochs" in cfg:
        exp.setdefault("train", {})
        exp["train"] = {**exp["train"], "max_epochs": int(cfg["epochs"])}
    return ExperimentConfig.from_dict(exp)


def cmd_cv(args, started):
    cfg = _merge(args, ["views", "labels", "out", "selector", "method", "extractors", "keep", "seeds", "cv",
                        "epochs", "jobs", "dgb_replicates"])
    out = _out_dir(cfg)
    data = _load(cfg)
    exp = experiment_from(cfg, data)
    report = run_cv(data, exp)
    rows = []
    for seed, rep in report.per_seed.items():
        rows.append({"seed": seed, **rep.summary(), "runtime_seconds": rep.runtime_seconds,
                     "best": seed == report.best_seed})
    pd.DataFrame(rows).to_csv(out / "metrics.csv", index=False)
    pred_rows = []
    for seed, rep in report.per_seed.items():
        for i, sid in enumerate(data.subject_ids):
            pred_rows.append({"seed": seed, "subject": sid, "truth": data.class_names[data.labels[i]],
                              "prediction": data.class_names[rep.predictions[i]]})
    pd.DataFrame(pred_rows).to_csv(out / "predictions.csv", index=False)
    for t in report.score_tables:
        t.to_frame().to_csv(out / f"scores_{t.view_name}.csv", index=False)
    body = {
        "best_seed": report.best_seed,
        "best": report.best.summary(),
        "seeds": {str(s): r.summary() for s, r in report.per_seed.items()},
        "confusion": report.best.confusion.tolist(),
        "class_names": list(data.class_names),
        "n_subjects": data.n_subjects,
        "n_folds": len(report.folds),
        "converged": {str(s): r.converged for s, r in report.per_seed.items()},
        "runtime_seconds": report.runtime_seconds,
        "experiment": exp.to_dict(),
    }
    (out / "report.json").write_text(json.dumps(body, indent=2))
    write_manifest(out, "cv", {**cfg, "experiment": exp.to_dict()}, exp.seeds, started,
                   {"folds": len(report.folds)})


def cmd_synth_bench(args, started):
    cfg = _merge(args, ["epsilon", "eta", "null", "replicates", "methods", "n", "p1", "p2", "t", "seed", "jobs",
                        "epochs", "out"])
    out = _out_dir(cfg)
    cells = cells_for(cfg.get("epsilon") or [], cfg.get("eta") or [], bool(cfg.get("null")))
    if not cells:
        raise UsageError("no benchmark cells: pass --epsilon, --eta or --null")
    train = TrainConfig.from_dict(cfg.get("train") or {})
    if cfg.get("epochs") is not None:
        train = TrainConfig.from_dict({**train.to_dict(), "max_epochs": int(cfg["epochs"])})
    bc = BenchConfig(int(cfg.get("n", 200)), int(cfg.get("p1", 20)), int(cfg.get("p2", 20)), int(cfg.get("t", 20)),
                     train=train, seed=int(cfg.get("seed", 0)))
    methods = cfg.get("methods") or list(BENCH_METHODS)
    df = synth_benchmark(cells, int(cfg.get("replicates", 20)), methods, bc, int(cfg.get("jobs") or 1))
    df.to_csv(out / "boxplot.csv", index=False)
    write_manifest(out, "synth-bench", cfg, [bc.seed], started, {"rows": len(df)})


def cmd_report(args, started):
    run = Path(args.run)
    if not run.exists():
        raise FileNotFoundError(f"no such directory: {run}")
    shown = False
    if (run / "report.json").exists():
        rep = json.loads((run / "report.json").read_text())
        print(f"best seed {rep['best_seed']}: " + ", ".join(f"{k}={v:.4f}" for k, v in rep["best"].items()))
        for seed, m in rep["seeds"].items():
            print(f"  seed {seed}: " + ", ".join(f"{k}={v:.4f}" for k, v in m.items()))
        shown = True
    if (run / "boxplot.csv").exists():
        df = pd.read_csv(run / "boxplot.csv")
        summary = df.groupby(["epsilon", "eta", "method"]).accuracy.agg(["median", "mean", "count"])
        print(summary.to_string())
        shown = True
    if not shown:
        raise FileNotFoundError(f"{run} holds neither report.json nor boxplot.csv")


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvlong", description="Multi-view longitudinal classification pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON config; flags override its keys")
        return p

    def data_args(p, out=True):
        p.add_argument("--views", nargs="+", help="long-format view CSVs (subject,variable,time,value)")
        p.add_argument("--labels", help="labels CSV (subject,label)")
        if out:
            p.add_argument("--out", help="output directory")

    p = add("preprocess", "window-average and filter raw views")
    data_args(p)
    p.add_argument("--window-len", dest="window_len", type=int)
    p.add_argument("--groups", type=int)
    p.add_argument("--log", action="store_true", default=None, help="log(x + pseudocount) transform")
    p.add_argument("--pseudocount", type=float)
    p.add_argument("--max-zero-frac", dest="max_zero_frac", type=float)
    p.add_argument("--variance-cutoff", dest="variance_cutoff", type=float)

    p = add("synth-gen", "generate one synthetic two-view dataset")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--p1", type=int)
    p.add_argument("--p2", type=int)
    p.add_argument("--t", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--out")

    p = add("extract", "turn longitudinal views into one-dimensional features")
    data_args(p)
    p.add_argument("--method", choices=["ec", "fpca", "mean", "none"])
    p.add_argument("--thresholds", type=int)
    p.add_argument("--components", type=int)
    p.add_argument("--association", choices=["correlation", "covariance", "precision"])
    p.add_argument("--standardize", action="store_true", default=None)

    p = add("rank", "score variables with lmm, jpta or dgb")
    data_args(p)
    p.add_argument("--method", choices=["lmm", "jpta", "dgb"])
    p.add_argument("--replicates", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--jpta-c", dest="jpta_c", type=float)

    p = add("cv", "cross-validate a selector x feature-extraction combination")
    data_args(p)
    p.add_argument("--selector", choices=["none", "lmm", "jpta", "dgb"])
    p.add_argument("--method", choices=["raw", "ec", "fpca"], help="extractor preset")
    p.add_argument("--extractors", type=lambda s: s.split(","), help="per-view extractors, comma separated")
    p.add_argument("--keep", type=_keep_list, help="variables kept per view, comma separated ('all' keeps every one)")
    p.add_argument("--seed", dest="seeds", type=_ints, help="seed or comma-separated seeds")
    p.add_argument("--cv", help="loo or kfold:<k>")
    p.add_argument("--epochs", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--dgb-replicates", dest="dgb_replicates", type=int)

    p = add("synth-bench", "EC vs FPCA vs GRU benchmark on synthetic data")
    p.add_argument("--epsilon", type=_floats)
    p.add_argument("--eta", type=_floats)
    p.add_argument("--null", action="store_true", default=None, help="include the epsilon = eta = 0 cell")
    p.add_argument("--replicates", type=int)
    p.add_argument("--methods", type=lambda s: s.split(","))
    p.add_argument("--n", type=int)
    p.add_argument("--p1", type=int)
    p.add_argument("--p2", type=int)
    p.add_argument("--t", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--out")

    p = sub.add_parser("report", help="summarise a cv or synth-bench output directory")
    p.add_argument("run")
    return parser


COMMANDS = {
    "preprocess": cmd_preprocess, "synth-gen": cmd_synth_gen, "extract": cmd_extract, "rank": cmd_rank,
    "cv": cmd_cv, "synth-bench": cmd_synth_bench, "report": cmd_report,
}


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    started = time.perf_counter()
    try:
        COMMANDS[args.command](args, started)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(json.dumps({"error": "usage", "message": str(exc)}), file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - every failure becomes a structured exit 1
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
