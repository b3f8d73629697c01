"""One-dimensional features from longitudinal views.

Three extractors turn an ``N x p x t`` view into a cross-sectional one:
Euler-characteristic curves of per-subject association graphs, per-variable
FPCA scores, and plain time means.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import DataError, ViewTensor

METHODS = ("none", "ec", "fpca", "mean")


@dataclass(frozen=True)
class EcCurve:
    thresholds: np.ndarray
    chi: np.ndarray


@dataclass(frozen=True)
class FpcBasis:
    components: np.ndarray  # (x, t), rows orthonormal
    mean_curve: np.ndarray  # (t,)
    explained_variance: np.ndarray  # (x,)

    @property
    def n_components(self) -> int:
        return self.components.shape[0]


def association_matrix(series: np.ndarray, kind: str = "correlation", ridge: bool = True) -> np.ndarray:
    """Variable-by-variable association of one subject's ``p x t`` series.

    Time points are treated as samples.  ``precision`` inverts the covariance
    after adding ``1e-3 * trace / p`` to the diagonal unless ``ridge=False``.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 2:
        raise ValueError("series must be a p x t matrix")
    p, t = x.shape
    if t < 2:
        raise ValueError("at least two time points are needed")
    xc = x - x.mean(axis=1, keepdims=True)
    cov = xc @ xc.T / (t - 1)
    if kind == "covariance":
        out = cov
    elif kind == "correlation":
        sd = np.sqrt(np.diag(cov))
        const = np.flatnonzero(sd == 0)
        if const.size:
            raise DataError(f"variable {const[0]} is constant; correlation undefined")
        out = cov / np.outer(sd, sd)
        np.fill_diagonal(out, 1.0)
    elif kind == "precision":
        if ridge:
            lam = 1e-3 * np.trace(cov) / p
            cov = cov + lam * np.eye(p)
        if np.linalg.matrix_rank(cov) < p:
            raise DataError("covariance is singular; enable ridge for the precision matrix")
        out = np.linalg.inv(cov)
    else:
        raise ValueError(f"unknown association kind {kind!r}")
    return (out + out.T) / 2


def _offdiag(weights: np.ndarray) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    iu = np.triu_indices(w.shape[0], k=1)
    return w[iu]


def ec_curve(weights: np.ndarray, thresholds) -> EcCurve:
    """Euler characteristic ``|V| - |E_l|`` where ``E_l`` keeps edges of weight <= l."""
    w = np.asarray(weights, dtype=float)
    thr = np.asarray(thresholds, dtype=float)
    if thr.ndim != 1 or thr.size == 0:
        raise ValueError("thresholds must be a non-empty 1-d sequence")
    if np.any(np.diff(thr) <= 0):
        raise ValueError("thresholds must be strictly increasing")
    edges = np.sort(_offdiag(w))
    kept = np.searchsorted(edges, thr, side="right")
    return EcCurve(thr, w.shape[0] - kept)


def ec_curves(weights: np.ndarray, thresholds) -> np.ndarray:
    """Batched :func:`ec_curve` over a stack of ``(N, p, p)`` matrices; returns ``(N, x)`` chi."""
    w = np.asarray(weights, dtype=float)
    thr = np.asarray(thresholds, dtype=float)
    p = w.shape[1]
    iu = np.triu_indices(p, k=1)
    edges = np.sort(w[:, iu[0], iu[1]], axis=1)
    # count of edges <= thr per subject
    kept = np.stack([np.searchsorted(e, thr, side="right") for e in edges]) if len(edges) else np.zeros((0, thr.size))
    return p - kept


def default_thresholds(weights: np.ndarray, count: int = 100) -> np.ndarray:
    """``count`` evenly spaced values spanning the off-diagonal weights.

    ``weights`` may be one ``p x p`` matrix or a stack of them (the span is
    pooled).  Equal weights everywhere give a single threshold.
    """
    if count < 2:
        raise ValueError("count must be at least 2")
    w = np.asarray(weights, dtype=float)
    if w.shape[-1] < 2:
        raise ValueError("need at least two variables to have edges")
    if w.ndim == 2:
        w = w[None]
    iu = np.triu_indices(w.shape[-1], k=1)
    off = w[:, iu[0], iu[1]]
    lo, hi = float(off.min()), float(off.max())
    if lo == hi:
        return np.array([lo])
    return np.linspace(lo, hi, count)


def _order_key(vec: np.ndarray) -> int:
    return int(np.argmax(np.abs(vec)))


def fpca_fit(curves: np.ndarray, n_components: int) -> FpcBasis:
    """Discretised FPCA on a shared regular grid: top eigenvectors of the sample covariance."""
    x = np.asarray(curves, dtype=float)
    n, t = x.shape
    if n_components < 1 or n_components > min(n, t):
        raise ValueError(f"n_components must be in [1, {min(n, t)}], got {n_components}")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / max(n - 1, 1)
    evals, evecs = np.linalg.eigh((cov + cov.T) / 2)
    # sign: largest-magnitude entry positive
    for j in range(t):
        k = _order_key(evecs[:, j])
        if evecs[k, j] < 0:
            evecs[:, j] = -evecs[:, j]
    evals = np.clip(evals, 0.0, None)
    scale = max(evals.max(initial=0.0), 1e-300)
    # ties (relative 1e-10) resolve by the index of the largest-magnitude entry
    rounded = np.round(evals / scale, 10)
    order = sorted(range(t), key=lambda j: (-rounded[j], _order_key(evecs[:, j]), j))
    order = order[:n_components]
    return FpcBasis(evecs[:, order].T.copy(), mean, evals[order])


def fpca_scores(basis: FpcBasis, curves: np.ndarray) -> np.ndarray:
    x = np.asarray(curves, dtype=float)
    if x.ndim == 1:
        x = x[None]
    if x.shape[1] != basis.mean_curve.size:
        raise ValueError(f"curve length {x.shape[1]} does not match basis length {basis.mean_curve.size}")
    return (x - basis.mean_curve) @ basis.components.T


def time_mean(view: ViewTensor) -> ViewTensor:
    if not view.is_longitudinal:
        return view
    values = view.values.mean(axis=2, keepdims=True)
    return ViewTensor(values, view.variable_names, [0.0])


@dataclass
class FeatureExtractor:
    """Fit-on-train / apply-to-test wrapper around the extractors.

    ``ec`` thresholds and ``fpca`` bases are learned in :meth:`fit` and reused
    by :meth:`transform`, so held-out subjects never influence them.
    """

    method: str = "none"
    n_thresholds: int = 100
    thresholds: np.ndarray | None = None
    n_components: int = 3
    association: str = "correlation"
    standardize_features: bool = False
    bases: list[FpcBasis] = field(default_factory=list)
    _center: np.ndarray | None = None
    _scale: np.ndarray | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown feature method {self.method!r}")

    def _check(self, view: ViewTensor):
        if self.method in ("ec", "fpca") and not view.is_longitudinal:
            raise DataError(f"{self.method} needs a longitudinal view (t > 1)")

    def _association_stack(self, view: ViewTensor) -> np.ndarray:
        return np.stack([association_matrix(s, self.association) for s in view.values])

    def fit(self, view: ViewTensor) -> "FeatureExtractor":
        self._check(view)
        if self.method == "ec" and self.thresholds is None:
            self.thresholds = default_thresholds(self._association_stack(view), self.n_thresholds)
        elif self.method == "fpca":
            k = min(self.n_components, view.n_subjects, view.n_times)
            self.bases = [fpca_fit(view.values[:, j, :], k) for j in range(view.n_variables)]
        if self.standardize_features and self.method != "none":
            feats = self._raw_transform(view)
            self._center = feats.mean(axis=0)
            sd = feats.std(axis=0, ddof=1) if len(feats) > 1 else np.ones(feats.shape[1])
            self._scale = np.where(sd > 0, sd, 1.0)
        return self

    def _raw_transform(self, view: ViewTensor) -> np.ndarray:
        if self.method == "ec":
            return ec_curves(self._association_stack(view), self.thresholds).astype(float)
        if self.method == "fpca":
            if len(self.bases) != view.n_variables:
                raise ValueError("extractor was fit on a different number of variables")
            # variable-major: all scores of variable 1, then variable 2, ...
            return np.concatenate(
                [fpca_scores(b, view.values[:, j, :]) for j, b in enumerate(self.bases)], axis=1
            )
        return view.values.mean(axis=2)

    def feature_names(self, view: ViewTensor) -> list[str]:
        if self.method == "ec":
            return [f"ec_{i + 1:03d}" for i in range(len(self.thresholds))]
        if self.method == "fpca":
            return [f"{name}_fpc{i + 1}" for name, b in zip(view.variable_names, self.bases)
                    for i in range(b.n_components)]
        return list(view.variable_names)

    def transform(self, view: ViewTensor) -> ViewTensor:
        if self.method == "none":
            return view
        self._check(view)
        feats = self._raw_transform(view)
        if self._center is not None:
            feats = (feats - self._center) / self._scale
        return ViewTensor(feats[:, :, None], self.feature_names(view), [0.0])


def extract_features(view: ViewTensor, method: str = "none", **params) -> ViewTensor:
    """Fit an extractor on ``view`` and apply it to the same view."""
    return FeatureExtractor(method, **params).fit(view).transform(view)
