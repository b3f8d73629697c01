import json

import pandas as pd
import pytest

from helpers import FAST_TRAIN, smoke_dataset
from mvlong.dataset import save_dataset
from mvlong.pipeline.cli import cli_main

FAST = {"train": FAST_TRAIN.to_dict(), "n_thresholds": 5, "n_components": 2}


@pytest.fixture()
def dataset(tmp_path):
    data = smoke_dataset(n=10)
    paths = save_dataset(data, tmp_path / "data")
    return [str(p) for p in paths], str(tmp_path / "data" / "labels.csv")


def run(argv):
    code = cli_main([str(a) for a in argv])
    return code


def test_cv_happy_path(tmp_path, dataset):
    views, labels = dataset
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({**FAST, "views": views, "labels": labels, "selector": "lmm", "keep": [3, 3, 2],
                               "method": "fpca", "seeds": [5]}))
    out = tmp_path / "out"
    assert run(["cv", "--config", cfg, "--seed", "0", "--out", out]) == 0
    for name in ("report.json", "metrics.csv", "predictions.csv", "manifest.json", "scores_view1.csv",
                 "scores_view2.csv", "scores_cross.csv"):
        assert (out / name).exists(), name
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seeds"] == [0]
    assert manifest["command"] == "cv" and len(manifest["config_sha256"]) == 64
    assert manifest["wall_time_seconds"] >= 0 and manifest["version"]
    report = json.loads((out / "report.json").read_text())
    assert report["n_folds"] == 10 and report["best_seed"] == 0
    scores = pd.read_csv(out / "scores_view1.csv")
    assert list(scores.columns) == ["view", "variable", "score", "method", "flag"]
    preds = pd.read_csv(out / "predictions.csv")
    assert len(preds) == 10


def test_missing_dataset_is_runtime_error(tmp_path, capsys):
    missing = tmp_path / "nope.csv"
    code = run(["cv", "--views", missing, "--labels", missing, "--out", tmp_path / "o"])
    assert code == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert "nope.csv" in err["message"]


def test_usage_errors(tmp_path, capsys):
    assert run(["cv", "--bogus"]) == 2
    assert run(["cv", "--out", tmp_path / "o"]) == 2
    assert "missing required setting" in capsys.readouterr().err
    assert run(["synth-bench", "--out", tmp_path / "o"]) == 2


def test_synth_gen_then_rank(tmp_path):
    gen = tmp_path / "gen"
    assert run(["synth-gen", "--n", 12, "--p1", 4, "--p2", 3, "--t", 5, "--epsilon", 1, "--seed", 2,
                "--out", gen]) == 0
    views = [gen / "view1.csv", gen / "view2.csv"]
    for method in ("lmm", "jpta"):
        out = tmp_path / method
        assert run(["rank", "--method", method, "--views", *views, "--labels", gen / "labels.csv",
                    "--out", out]) == 0
        table = pd.read_csv(out / "scores_view1.csv")
        assert len(table) == 4 and set(table.method) == {method}
        assert (out / "manifest.json").exists()


def test_extract_and_report(tmp_path, dataset):
    views, labels = dataset
    out = tmp_path / "feat"
    assert run(["extract", "--method", "ec", "--thresholds", 7, "--views", *views, "--labels", labels,
                "--out", out]) == 0
    feats = pd.read_csv(out / "features_view1.csv")
    assert feats.shape == (10, 2 + 7)
    # the cross-sectional view passes through unchanged
    assert pd.read_csv(out / "features_cross.csv").shape == (10, 2 + 4)
    assert run(["report", tmp_path / "nothing"]) == 1


def test_synth_bench_layout(tmp_path, capsys):
    out = tmp_path / "bench"
    cfg = tmp_path / "b.json"
    cfg.write_text(json.dumps({"train": FAST_TRAIN.to_dict()}))
    assert run(["synth-bench", "--config", cfg, "--epsilon", "0.5,1", "--replicates", 2, "--n", 30,
                "--p1", 4, "--p2", 3, "--t", 6, "--out", out]) == 0
    df = pd.read_csv(out / "boxplot.csv")
    assert len(df) == 2 * 3 * 2
    assert set(df.method) == {"deepida_ec", "deepida_fpc", "deepida_gru"}
    assert run(["report", out]) == 0
    assert "deepida_ec" in capsys.readouterr().out


def test_preprocess_raw(tmp_path):
    rows = [(s, v, t, float(i + t)) for i, s in enumerate(["a", "b", "c"]) for v in ("x", "y") for t in (0, 1, 3, 4)]
    pd.DataFrame(rows, columns=["subject", "variable", "time", "value"]).to_csv(tmp_path / "raw.csv", index=False)
    pd.DataFrame({"subject": ["a", "b", "c"], "label": ["h", "d", "h"]}).to_csv(tmp_path / "lab.csv", index=False)
    out = tmp_path / "pre"
    assert run(["preprocess", "--views", tmp_path / "raw.csv", "--labels", tmp_path / "lab.csv",
                "--window-len", 2, "--groups", 3, "--log", "--out", out]) == 0
    long = pd.read_csv(out / "raw.csv")
    assert set(long.time.unique()) == {0, 2, 4}
    assert (out / "labels.csv").exists() and (out / "manifest.json").exists()
