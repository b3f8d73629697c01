"""Integrative discriminant analysis on network outputs.

For view outputs ``H_d`` (``o_d x N``) the objective is::

    L = rho/D * sum_d tr(P_d' MB_d P_d)
        + 2(1-rho)/(D(D-1)) * sum_{i != j} ||P_i' M_ij P_j||_F^2

maximised subject to ``tr(P_d' MT_d P_d) = ell`` for every view.  ``mu_d`` is
the unweighted mean of the class means, used for every centering.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg


@dataclass
class ScatterSet:
    between: list[np.ndarray]
    total: list[np.ndarray]
    cross: dict[tuple[int, int], np.ndarray]
    class_means: list[np.ndarray]  # (o_d, K)
    grand_means: list[np.ndarray]  # (o_d,)
    centered: list[np.ndarray]  # H_d - mu_d, kept for gradients
    labels: np.ndarray
    counts: np.ndarray

    @property
    def n_views(self) -> int:
        return len(self.between)

    @property
    def n_classes(self) -> int:
        return len(self.counts)

    def cross_pair(self, i: int, j: int) -> np.ndarray:
        return self.cross[(i, j)] if i < j else self.cross[(j, i)].T


@dataclass
class ProjectionBasis:
    P: list[np.ndarray]
    ell: int
    rho: float
    converged: bool = True
    n_sweeps: int = 0
    loss_history: list[float] = field(default_factory=list)


def _class_counts(labels, n_classes):
    labels = np.asarray(labels, dtype=int)
    k = n_classes or int(labels.max()) + 1
    counts = np.bincount(labels, minlength=k)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise ValueError(f"class {empty[0]} has no subjects")
    return labels, counts


def scatter_matrices(outputs, labels, n_classes: int | None = None) -> ScatterSet:
    labels, counts = _class_counts(labels, n_classes)
    hs = [np.asarray(h, dtype=float) for h in outputs]
    n = labels.size
    if any(h.ndim != 2 or h.shape[1] != n for h in hs):
        raise ValueError("every output must be o_d x N with N matching the labels")
    if n < 2:
        raise ValueError("need at least two subjects")
    onehot = np.eye(len(counts))[labels]  # (N, K)
    between, total, means, grand, centered = [], [], [], [], []
    for h in hs:
        mu_k = h @ onehot / counts
        mu = mu_k.mean(axis=1)
        dev = mu_k - mu[:, None]
        between.append((dev * counts) @ dev.T / (n - 1))
        hc = h - mu[:, None]
        total.append(hc @ hc.T / (n - 1))
        means.append(mu_k)
        grand.append(mu)
        centered.append(hc)
    cross = {}
    for i in range(len(hs)):
        for j in range(i + 1, len(hs)):
            cross[(i, j)] = centered[i] @ centered[j].T / (n - 1)
    return ScatterSet(between, total, cross, means, grand, centered, labels, counts)


def _assoc_weight(d: int, rho: float) -> float:
    return 0.0 if d < 2 else 2.0 * (1.0 - rho) / (d * (d - 1))


def ida_loss(scatter: ScatterSet, proj: ProjectionBasis) -> float:
    d = scatter.n_views
    rho = proj.rho
    if d == 1 and rho < 1:
        warnings.warn("single view: the association term is vacuous", RuntimeWarning, stacklevel=2)
    return objective(scatter, proj.P, rho)


def objective(scatter: ScatterSet, P, rho: float) -> float:
    d = scatter.n_views
    sep = sum(np.trace(p.T @ mb @ p) for p, mb in zip(P, scatter.between))
    loss = rho / d * sep
    w = _assoc_weight(d, rho)
    if w:
        for (i, j), m in scatter.cross.items():
            g = P[i].T @ m @ P[j]
            # the (i, j) and (j, i) terms are equal
            loss += 2.0 * w * float(np.sum(g * g))
    return float(loss)


def _sign_fix(v: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[idx, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return v * signs


def _ridged(mt: np.ndarray) -> np.ndarray:
    o = mt.shape[0]
    lam = 1e-6 * np.trace(mt) / o
    if lam <= 0:
        lam = 1e-12
    return mt + lam * np.eye(o)


def _top_vectors(a: np.ndarray, mt: np.ndarray, ell: int) -> np.ndarray:
    a = (a + a.T) / 2
    _, vecs = scipy.linalg.eigh(a, _ridged(mt))
    v = _sign_fix(vecs[:, ::-1][:, :ell])
    return _normalise(v, mt, ell)


def _normalise(v: np.ndarray, mt: np.ndarray, ell: int) -> np.ndarray:
    tr = float(np.trace(v.T @ mt @ v))
    return v * np.sqrt(ell / tr) if tr > 0 else v


def default_ell(scatter: ScatterSet) -> int:
    return int(min([scatter.n_classes - 1] + [b.shape[0] for b in scatter.between]))


def solve_projections(scatter: ScatterSet, rho: float = 0.5, ell: int | None = None,
                      max_sweeps: int = 100, tol: float = 1e-8) -> ProjectionBasis:
    """Alternating per-view generalized eigen-solves.

    Each view update maximises the loss over ``P_d`` with the others fixed;
    an update that would lower the loss (possible only through the ridge on
    ``MT_d``) is rejected, so the recorded losses never decrease.
    """
    d = scatter.n_views
    ell = ell or default_ell(scatter)
    P = [_top_vectors(mb, mt, ell) for mb, mt in zip(scatter.between, scatter.total)]
    loss = objective(scatter, P, rho)
    history = [loss]
    w = _assoc_weight(d, rho)
    if w == 0.0:
        # views decouple: the rho = 1 start is already optimal
        return ProjectionBasis(P, ell, rho, True, 0, history)
    converged = False
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        for k in range(d):
            a = rho / d * scatter.between[k]
            for j in range(d):
                if j != k:
                    m = scatter.cross_pair(k, j) @ P[j]
                    a = a + 2.0 * w * (m @ m.T)
            trial = P.copy()
            trial[k] = _top_vectors(a, scatter.total[k], ell)
            new = objective(scatter, trial, rho)
            if new >= loss:
                P, loss = trial, new
        history.append(loss)
        if history[-1] - history[-2] < tol:
            converged = True
            break
    return ProjectionBasis(P, ell, rho, converged, sweeps, history)


def ida_grad(outputs, labels, proj: ProjectionBasis, rho: float | None = None,
             n_classes: int | None = None) -> list[np.ndarray]:
    """dL/dH_d with the projections held fixed."""
    rho = proj.rho if rho is None else rho
    sc = scatter_matrices(outputs, labels, n_classes)
    d = sc.n_views
    n = sc.labels.size
    if any(p.shape[0] != h.shape[0] for p, h in zip(proj.P, sc.centered)):
        raise ValueError("projection and output dimensions disagree")
    counts = sc.counts
    k = len(counts)
    # mu_d = H_d @ wvec
    wvec = 1.0 / (k * counts[sc.labels])
    grads = []
    for v in range(d):
        p = proj.P[v]
        dev = sc.class_means[v] - sc.grand_means[v][:, None]
        per_sample = dev[:, sc.labels]
        grads.append(rho / d * 2.0 / (n - 1) * (p @ (p.T @ per_sample)))
    w = _assoc_weight(d, rho)
    if w:
        for (i, j), m in sc.cross.items():
            pi, pj = proj.P[i], proj.P[j]
            g = pi.T @ m @ pj
            scale = 2.0 * w * 2.0 / (n - 1)
            grads[i] = grads[i] + scale * (pi @ g @ (pj.T @ sc.centered[j]))
            grads[j] = grads[j] + scale * (pj @ g.T @ (pi.T @ sc.centered[i]))
    # chain through the centering H~ = H - (H w) 1'
    return [g - np.outer(g.sum(axis=1), wvec) for g in grads]


def project(proj: ProjectionBasis, outputs) -> np.ndarray:
    """Stack ``P_d' H_d`` into a ``(D * ell) x N`` matrix."""
    return np.vstack([p.T @ np.asarray(h, dtype=float) for p, h in zip(proj.P, outputs)])


def centroid_fit(projected: np.ndarray, labels, n_classes: int | None = None) -> np.ndarray:
    """Per-class means of the stacked projections, ``(D * ell) x K``."""
    labels, counts = _class_counts(labels, n_classes)
    z = np.asarray(projected, dtype=float)
    onehot = np.eye(len(counts))[labels]
    return z @ onehot / counts


def centroid_predict(centroids: np.ndarray, projected: np.ndarray) -> np.ndarray:
    """Nearest centroid in Euclidean distance; ties go to the lowest class index."""
    z = np.asarray(projected, dtype=float)
    c = np.asarray(centroids, dtype=float)
    if z.shape[0] != c.shape[0]:
        raise ValueError("projected data and centroids differ in dimension")
    dist = ((z[:, :, None] - c[:, None, :]) ** 2).sum(axis=0)
    return np.argmin(dist, axis=1)
