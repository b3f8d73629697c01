"""Rank-1 joint trend decomposition of two longitudinal views.

Minimises ``sum_n ||X1_n - u f'||^2 + ||X2_n - v f'||^2`` with ``f = B theta``
over sparse unit loadings ``u``, ``v`` (L2 = 1, L1 <= c_i) and a smooth
shared trend (``theta' H theta <= c``) that carries the scale.  Each block
update is an exact minimiser, so the objective never increases.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline


@dataclass
class JptaModel:
    u: np.ndarray
    v: np.ndarray
    theta: np.ndarray
    basis: np.ndarray  # (T, T+2)
    penalty: np.ndarray  # (T+2, T+2)
    constraints: tuple[float, float, float]
    objective: list[float] = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False

    @property
    def trend(self) -> np.ndarray:
        return self.basis @ self.theta


def _knots(T: int) -> np.ndarray:
    inner = np.arange(1, T + 1, dtype=float)
    return np.r_[[1.0] * 3, inner, [float(T)] * 3]


def spline_basis(T: int) -> tuple[np.ndarray, np.ndarray]:
    """Cubic B-splines with knots at 1..T and their roughness matrix.

    ``H[i, j] = int B_i'' B_j''``.  Second derivatives are linear on each knot
    interval, so two-point Gauss-Legendre integrates the products exactly.
    """
    if T < 4:
        raise ValueError("need at least 4 time points for a cubic spline basis")
    knots = _knots(T)
    spl = BSpline(knots, np.eye(T + 2), 3)
    B = spl(np.arange(1, T + 1, dtype=float))
    d2 = spl.derivative(2)
    gx, gw = np.polynomial.legendre.leggauss(2)
    H = np.zeros((T + 2, T + 2))
    for a in range(1, T):
        pts = a + 0.5 * (gx + 1.0)
        vals = d2(pts)  # (2, T+2)
        H += 0.5 * (vals.T * gw) @ vals
    return B, (H + H.T) / 2


def _soft(x: np.ndarray, delta: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - delta, 0.0)


def _tied_direction(a: np.ndarray, c1: float) -> np.ndarray:
    """Optimum when the largest ``|a|`` entries tie and thresholding cannot reach ``c1``.

    Any unit vector on the tied set with L1 norm ``c1`` attains the bound
    ``u'a <= max|a| * c1``; use ``m = ceil(c1^2)`` entries, ``m - 1`` equal to
    ``beta`` and one equal to ``gamma``.
    """
    top = np.abs(a).max()
    tied = np.flatnonzero(np.abs(a) == top)
    m = min(int(np.ceil(c1 * c1 - 1e-12)), tied.size)
    s = m - 1
    x = np.zeros_like(a)
    if s == 0:
        x[tied[0]] = np.sign(a[tied[0]])
        return x
    beta = (c1 * s + np.sqrt(max(s * (s + 1 - c1 * c1), 0.0))) / (s * (s + 1))
    gamma = max(c1 - s * beta, 0.0)
    x[tied[:s]] = beta
    x[tied[s]] = gamma
    return x * np.sign(a)


def sparse_direction(a: np.ndarray, c1: float, iters: int = 100) -> np.ndarray:
    """Maximiser of ``u'a`` over unit vectors with ``||u||_1 <= c1``.

    The solution is ``S(a, delta) / ||S(a, delta)||_2`` with ``delta = 0`` when
    that already meets the L1 bound, otherwise the ``delta`` that makes the
    L1 norm equal ``c1`` (found by bisection).
    """
    a = np.asarray(a, dtype=float)
    if not np.any(a):
        return np.zeros_like(a)

    def unit(delta):
        s = _soft(a, delta)
        return s / np.linalg.norm(s)

    x = unit(0.0)
    if np.abs(x).sum() <= c1:
        return x
    top = float(np.abs(a).max())
    n_tied = int(np.sum(np.abs(a) == top))
    # as delta -> max|a| the direction tends to equal weights on the tied set
    if np.sqrt(n_tied) > c1:
        return _tied_direction(a, c1)
    lo, hi = 0.0, top
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.abs(unit(mid)).sum() > c1:
            lo = mid
        else:
            hi = mid
    if hi < top:
        return unit(hi)
    return np.where(np.abs(a) == top, np.sign(a), 0.0) / np.sqrt(n_tied)


def _objective(const, s1, s2, n, u, v, f):
    ff = float(f @ f)
    return const - 2.0 * float(u @ s1 @ f) - 2.0 * float(v @ s2 @ f) + n * ff * (float(u @ u) + float(v @ v))


def _theta_step(s1, s2, n, u, v, B, H, c, iters=200):
    a = float(u @ u) + float(v @ v)
    rhs = B.T @ (s1.T @ u + s2.T @ v)
    G = n * a * (B.T @ B)
    scale = max(np.trace(G), np.trace(H), 1e-12)

    def solve(lam):
        return np.linalg.solve(G + lam * H, rhs)

    lo = 1e-10 * scale
    th = solve(lo)
    if th @ H @ th <= c:
        return th
    hi = lo
    while True:
        hi *= 10.0
        th = solve(hi)
        if th @ H @ th <= c:
            break
    # bisection on log(lambda): roughness decreases as lambda grows
    lo_l, hi_l = np.log(lo), np.log(hi)
    for _ in range(iters):
        mid = 0.5 * (lo_l + hi_l)
        th = solve(np.exp(mid))
        if th @ H @ th > c:
            lo_l = mid
        else:
            hi_l = mid
        if hi_l - lo_l < 1e-12:
            break
    th = solve(np.exp(hi_l))
    # numerically guard the constraint
    r = float(th @ H @ th)
    return th * np.sqrt(c / r) if r > c else th


def _loading_step(s, f, c_i, old):
    # with ||u|| fixed at 1 the loss is linear in u
    a = s @ f
    if not np.any(a):
        return old
    return sparse_direction(a, c_i)


def _leading(s: np.ndarray) -> np.ndarray:
    u = np.linalg.svd(s, full_matrices=False)[0][:, 0]
    return u if u[np.argmax(np.abs(u))] > 0 else -u


def jpta_fit(X1, X2, c: float = 10.0, c1: float | None = None, c2: float | None = None,
             max_iters: int = 100, tol: float = 1e-7) -> JptaModel:
    X1 = np.asarray(X1, dtype=float)
    X2 = np.asarray(X2, dtype=float)
    if X1.ndim != 3 or X2.ndim != 3 or X1.shape[0] != X2.shape[0]:
        raise ValueError("views must be N x p x T with matching N")
    if X1.shape[2] != X2.shape[2]:
        raise ValueError("both views need the same number of time points")
    n, p1, T = X1.shape
    p2 = X2.shape[1]
    c1 = max(1.0, np.sqrt(p1) / 2) if c1 is None else float(c1)
    c2 = max(1.0, np.sqrt(p2) / 2) if c2 is None else float(c2)
    if c <= 0:
        raise ValueError("roughness bound c must be positive")
    if c1 < 1 or c2 < 1:
        raise ValueError("L1 bounds below 1 exclude unit-norm loadings")

    B, H = spline_basis(T)
    s1, s2 = X1.sum(axis=0), X2.sum(axis=0)
    const = float(np.sum(X1 ** 2) + np.sum(X2 ** 2))
    u = sparse_direction(_leading(s1), c1)
    v = sparse_direction(_leading(s2), c2)
    theta = np.zeros(T + 2)
    obj = _objective(const, s1, s2, n, u, v, B @ theta)
    history = [obj]
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        cand = _theta_step(s1, s2, n, u, v, B, H, c)
        new = _objective(const, s1, s2, n, u, v, B @ cand)
        if new <= obj:
            theta, obj = cand, new
        f = B @ theta
        u = _loading_step(s1, f, c1, u)
        v = _loading_step(s2, f, c2, v)
        obj = _objective(const, s1, s2, n, u, v, f)
        history.append(obj)
        if abs(history[-2] - obj) <= tol * max(abs(obj), 1e-300):
            converged = True
            break
    return JptaModel(u, v, theta, B, H, (float(c), c1, c2), history, it, converged)


def jpta_select(model: JptaModel, k1: int, k2: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices of the largest absolute loadings per view (unordered; ties to the lower index)."""
    def top(w, k):
        if k > w.size:
            raise ValueError(f"cannot keep {k} of {w.size} variables")
        return np.sort(np.argsort(-np.abs(w), kind="stable")[:k])

    return top(model.u, k1), top(model.v, k2)
