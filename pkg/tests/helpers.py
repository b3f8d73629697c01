"""Small datasets shared by the tests."""
from __future__ import annotations

import numpy as np

from mvlong.dataset import MultiViewDataset, ViewTensor
from mvlong.nets import DenseSpec, GruSpec
from mvlong.pipeline.model import TrainConfig
from mvlong.synth import SynthConfig, generate_dataset

FAST_TRAIN = TrainConfig(gru=GruSpec(hidden_dim=4), dense=DenseSpec((8, 4)), max_epochs=5, patience=3)


def smoke_dataset(n: int = 20, seed: int = 0) -> MultiViewDataset:
    """Two longitudinal synthetic views plus one cross-sectional view with a class shift."""
    base = generate_dataset(SynthConfig(n_subjects=n, p1=6, p2=5, t=6, epsilon=0.75, seed=seed))
    rng = np.random.default_rng(seed + 1)
    labels = base.labels.copy()
    # guarantee both classes have at least three members
    labels[:3], labels[3:6] = 0, 1
    cross = rng.normal(size=(n, 4, 1)) + 1.5 * labels[:, None, None]
    views = base.views + (ViewTensor(cross, [f"x_{j + 1}" for j in range(4)], [0.0]),)
    return MultiViewDataset(views, labels, base.subject_ids, base.class_names, ("view1", "view2", "cross"))


def blobs(n_per_class: int = 10, p: int = 3, shift: float = 3.0, seed: int = 0, t: int = 1):
    rng = np.random.default_rng(seed)
    labels = np.repeat([0, 1], n_per_class)
    x = rng.normal(size=(2 * n_per_class, p, t)) + shift * (2 * labels[:, None, None] - 1)
    return x, labels


def planted_dataset(seed: int, n: int = 80, sizes=(15, 15), t: int = 5, shift: float = 1.5) -> MultiViewDataset:
    """Pure-noise longitudinal views except variable 0 of the first view, which is shifted by class."""
    rng = np.random.default_rng(seed)
    labels = np.repeat([0, 1], n // 2)
    views = []
    for d, p in enumerate(sizes):
        x = rng.normal(size=(n, p, t))
        if d == 0:
            x[:, 0, :] += shift * (2 * labels[:, None] - 1)
        views.append(ViewTensor(x, [f"v{d + 1}_{j}" for j in range(p)], list(range(t))))
    return MultiViewDataset(tuple(views), labels, [f"s{i}" for i in range(n)], ("a", "b"), ("view1", "view2"))


PLANTED_TRAIN = TrainConfig(gru=GruSpec(hidden_dim=8), max_epochs=50, patience=10)
