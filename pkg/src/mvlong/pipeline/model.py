"""End-to-end training of per-view networks against the discriminant objective."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .. import ida
from ..dataset import MultiViewDataset, ViewTensor
from ..nets import DenseSpec, DivergenceError, GruSpec, backward, forward, init_params


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters; these are declared defaults, not tuned values."""

    gru: GruSpec = GruSpec()
    dense: DenseSpec = DenseSpec()
    rho: float = 0.5
    lr: float = 1e-3
    max_epochs: int = 200
    patience: int = 10
    tol: float = 1e-6
    seed: int = 0

    def with_seed(self, seed: int) -> "TrainConfig":
        return replace(self, seed=int(seed))

    def to_dict(self) -> dict:
        return {
            "gru": {"hidden_dim": self.gru.hidden_dim, "n_layers": self.gru.n_layers},
            "dense": {"layer_sizes": list(self.dense.layer_sizes), "activation": self.dense.activation},
            "rho": self.rho, "lr": self.lr, "max_epochs": self.max_epochs,
            "patience": self.patience, "tol": self.tol, "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "gru" in d:
            d["gru"] = GruSpec(**d["gru"])
        if "dense" in d:
            g = dict(d["dense"])
            g["layer_sizes"] = tuple(g.get("layer_sizes", DenseSpec().layer_sizes))
            d["dense"] = DenseSpec(**g)
        return cls(**d)


def net_input(view: ViewTensor) -> np.ndarray:
    """GRUs read ``N x p x t``; dense nets read ``p x N``."""
    if view.is_longitudinal:
        return view.values
    return view.values[:, :, 0].T


@dataclass
class DeepIdaModel:
    params: list
    proj: ida.ProjectionBasis
    centroids: np.ndarray
    loss_history: list[float] = field(default_factory=list)
    epochs: int = 0
    converged: bool = False

    def outputs(self, data: MultiViewDataset) -> list[np.ndarray]:
        return [forward(p, net_input(v)).values for p, v in zip(self.params, data.views)]

    def transform(self, data: MultiViewDataset) -> np.ndarray:
        return ida.project(self.proj, self.outputs(data))

    def predict(self, data: MultiViewDataset) -> np.ndarray:
        return ida.centroid_predict(self.centroids, self.transform(data))

    def accuracy(self, data: MultiViewDataset) -> float:
        return float(np.mean(self.predict(data) == data.labels))


def _check_train(train: MultiViewDataset):
    counts = np.bincount(train.labels, minlength=train.n_classes)
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        raise ValueError(f"class {train.class_names[missing[0]]!r} is absent from the training data")
    for d, v in enumerate(train.views):
        if v.mask is not None:
            raise ValueError(f"view {d} has missing cells; aggregate or impute first")


def train_deepida_gru(train: MultiViewDataset, config: TrainConfig = TrainConfig(),
                      hook=None) -> DeepIdaModel:
    """Full-batch gradient ascent on the discriminant loss.

    Each epoch runs every network forward, solves the projections on the
    current outputs, then pushes ``dL/dH_d`` (projections frozen) back
    through the networks.  Training stops after ``max_epochs`` or once the
    loss has gained less than ``tol`` over ``patience`` epochs.  ``hook``, if
    given, is called as ``hook(stage, subject_ids)`` for fold-hygiene checks.
    """
    _check_train(train)
    if hook is not None:
        hook("train", train.subject_ids)
    rng = np.random.default_rng(config.seed)
    inputs = [net_input(v) for v in train.views]
    params = []
    for v in train.views:
        spec = config.gru if v.is_longitudinal else config.dense
        params.append(init_params(spec, v.n_variables, rng))
    labels, k = train.labels, train.n_classes

    history: list[float] = []
    converged = False
    epoch = 0
    for epoch in range(config.max_epochs):
        try:
            outs = [forward(p, x) for p, x in zip(params, inputs)]
        except DivergenceError as exc:
            raise DivergenceError(f"{exc} at epoch {epoch}") from exc
        values = [o.values for o in outs]
        scatter = ida.scatter_matrices(values, labels, k)
        proj = ida.solve_projections(scatter, config.rho)
        loss = ida.objective(scatter, proj.P, config.rho)
        if not np.isfinite(loss):
            raise DivergenceError(f"loss became non-finite at epoch {epoch}")
        history.append(loss)
        if len(history) > config.patience and history[-1] - history[-1 - config.patience] < config.tol:
            converged = True
            break
        grads = ida.ida_grad(values, labels, proj, config.rho, k)
        for p, o, g in zip(params, outs, grads):
            pg, _ = backward(p, o.cache, g)
            p.step(pg, config.lr)
    else:
        epoch = config.max_epochs

    try:
        values = [forward(p, x).values for p, x in zip(params, inputs)]
    except DivergenceError as exc:
        raise DivergenceError(f"{exc} after epoch {epoch}") from exc
    scatter = ida.scatter_matrices(values, labels, k)
    proj = ida.solve_projections(scatter, config.rho)
    centroids = ida.centroid_fit(ida.project(proj, values), labels, k)
    return DeepIdaModel(params, proj, centroids, history, epoch, converged)
