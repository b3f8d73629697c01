"""Random-intercept linear mixed model with a likelihood-ratio class test.

Both nested models are fit by maximum likelihood.  With ``gamma = s_b^2 / s_e^2``
the per-subject covariance is ``s_e^2 (I + gamma J)``, whose inverse is
``(I - c J) / s_e^2`` with ``c = gamma / (1 + n_i gamma)``, so everything
reduces to per-subject sums and the profile deviance is one-dimensional in
``gamma``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import optimize, stats

from ..dataset import ViewTensor

TINY = np.finfo(float).tiny
LOG_GAMMA_BOUNDS = (-20.0, 12.0)


@dataclass(frozen=True)
class LmmResult:
    pvalue: float
    lrt: float
    df: int
    degenerate: bool = False
    clamped: bool = False
    gamma_null: float = 0.0
    gamma_full: float = 0.0


class _Grouped:
    """Per-subject sufficient statistics for one response and design."""

    def __init__(self, y, X, groups):
        codes, inv = np.unique(groups, return_inverse=True)
        self.n = y.size
        self.counts = np.bincount(inv).astype(float)
        self.yy = float(y @ y)
        self.Xy = X.T @ y
        self.XX = X.T @ X
        g = len(codes)
        self.Sx = np.zeros((g, X.shape[1]))
        np.add.at(self.Sx, inv, X)
        self.Sy = np.bincount(inv, weights=y, minlength=g)

    def deviance(self, gamma: float) -> float:
        """-2 log-likelihood with beta and s_e^2 profiled out."""
        c = gamma / (1.0 + self.counts * gamma)
        A = self.XX - (self.Sx * c[:, None]).T @ self.Sx
        b = self.Xy - self.Sx.T @ (c * self.Sy)
        beta = np.linalg.solve(A, b)
        q = self.yy - float(np.sum(c * self.Sy ** 2)) - float(b @ beta)
        q = max(q, TINY * self.n)
        sigma2 = q / self.n
        return self.n * (np.log(2 * np.pi * sigma2) + 1.0) + float(np.sum(np.log1p(self.counts * gamma)))


def _min_deviance(g: _Grouped) -> tuple[float, float]:
    at_zero = g.deviance(0.0)
    if np.all(g.counts == 1):
        # intercept variance is not identifiable from one observation per subject
        return at_zero, 0.0
    res = optimize.minimize_scalar(lambda t: g.deviance(np.exp(t)), bounds=LOG_GAMMA_BOUNDS,
                                   method="bounded", options={"xatol": 1e-10})
    if res.fun < at_zero:
        return float(res.fun), float(np.exp(res.x))
    return at_zero, 0.0


def _independent_columns(X: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Greedy left-to-right column selection; drops constant and collinear columns."""
    keep: list[int] = []
    scale = np.abs(X).max(initial=0.0) or 1.0
    for j in range(X.shape[1]):
        cand = X[:, keep + [j]]
        if np.linalg.matrix_rank(cand, tol=tol * scale * np.sqrt(X.shape[0])) == len(keep) + 1:
            keep.append(j)
    return X[:, keep]


def lmm_pvalue(values, subjects, times, classes, covariates=None) -> LmmResult:
    """LRT p-value for a class fixed effect in ``value ~ 1 + time + covariates + (1 | subject)``."""
    y = np.asarray(values, dtype=float)
    n = y.size
    subj = np.asarray(subjects)
    t = np.asarray(times, dtype=float)
    cls = np.asarray(classes)
    if not (subj.size == t.size == cls.size == n):
        raise ValueError("values, subjects, times and classes must have equal length")
    if not np.all(np.isfinite(y)):
        raise ValueError("values must be finite")
    levels = np.unique(cls)
    if n < 2 or levels.size < 2 or np.ptp(y) == 0:
        return LmmResult(1.0, 0.0, 0, degenerate=True)

    cols = [np.ones(n), t]
    if covariates is not None:
        cov = np.asarray(covariates, dtype=float).reshape(n, -1)
        cols.extend(cov.T)
    X0 = _independent_columns(np.column_stack(cols))
    dummies = (cls[:, None] == levels[None, 1:]).astype(float)
    X1 = _independent_columns(np.column_stack([X0, dummies]))
    df = X1.shape[1] - X0.shape[1]
    if df == 0:
        return LmmResult(1.0, 0.0, 0, degenerate=True)

    # the LRT is scale free; standardising keeps the solves well conditioned
    y = (y - y.mean()) / y.std()
    dev0, g0 = _min_deviance(_Grouped(y, X0, subj))
    dev1, g1 = _min_deviance(_Grouped(y, X1, subj))
    lrt = max(dev0 - dev1, 0.0)
    p = float(stats.chi2.sf(lrt, df))
    clamped = p < TINY
    if clamped:
        p = TINY
    return LmmResult(min(p, 1.0), lrt, df, False, clamped, g0, g1)


def lmm_view_pvalues(view: ViewTensor, labels, covariates=None) -> tuple[np.ndarray, np.ndarray]:
    """Per-variable LRT p-values for one view; returns (pvalues, degenerate flags)."""
    n, p, t = view.shape
    subjects = np.repeat(np.arange(n), t)
    times = np.tile(np.asarray(view.time_labels, dtype=float), n)
    classes = np.repeat(np.asarray(labels), t)
    pvals = np.ones(p)
    flags = np.zeros(p, dtype=bool)
    present = view.present
    for j in range(p):
        vals = view.values[:, j, :].ravel()
        keep = present[:, j, :].ravel()
        res = lmm_pvalue(vals[keep], subjects[keep], times[keep], classes[keep],
                         None if covariates is None else np.repeat(covariates, t, axis=0)[keep])
        pvals[j] = res.pvalue
        flags[j] = res.degenerate or res.clamped
    return pvals, flags


def long_frame(view: ViewTensor, labels) -> pd.DataFrame:
    """Long-format frame (subject, time, class, variable columns) for external model checks."""
    n, p, t = view.shape
    frame = pd.DataFrame({
        "subject": np.repeat(np.arange(n), t),
        "time": np.tile(np.asarray(view.time_labels, dtype=float), n),
        "klass": np.repeat(np.asarray(labels), t),
    })
    for j, name in enumerate(view.variable_names):
        frame[name] = view.values[:, j, :].ravel()
    return frame
