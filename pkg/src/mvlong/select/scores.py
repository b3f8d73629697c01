"""Score tables, Fisher p-value combination and score normalisation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import pandas as pd
from scipy import stats

TINY = np.finfo(float).tiny


class CombinedP(NamedTuple):
    pvalue: float
    statistic: float
    clamped: bool


def fisher_combine(pvalues) -> CombinedP:
    """Fisher's method: ``X = -2 sum ln p`` referred to chi^2 with ``2n`` df.

    Exact zeros are clamped to the smallest positive normal float and flagged.
    """
    p = np.asarray(pvalues, dtype=float).ravel()
    if p.size == 0:
        raise ValueError("need at least one p-value")
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise ValueError("p-values must lie in [0, 1]")
    clamped = bool(np.any(p == 0))
    p = np.maximum(p, TINY)
    # sorting makes the sum independent of input order
    x = float(-2.0 * np.sum(np.log(np.sort(p))))
    return CombinedP(float(stats.chi2.sf(x, 2 * p.size)), x, clamped)


def normalize_scores(fisher_ps) -> np.ndarray:
    """Shift by the smallest nonzero p, take ``-log`` and divide by the maximum.

    Variables whose p was exactly 0 share the top score.  A shifted p above 1
    has negative ``-log`` and is floored at 0 (no evidence).  When every
    shifted p is >= 1 the division is undefined, so the ``-log`` values are
    min-max rescaled onto [0, 1] instead.
    """
    p = np.asarray(fisher_ps, dtype=float).ravel()
    if p.size == 0 or not np.any(p > 0):
        raise ValueError("need at least one nonzero p-value")
    s = -np.log(p + p[p > 0].min())
    top = s.max()
    if top > 0:
        return np.maximum(s, 0.0) / top
    spread = top - s.min()
    return np.ones_like(s) if spread == 0 else (s - s.min()) / spread


@dataclass
class VariableScoreTable:
    view_index: int
    variable_names: list[str]
    scores: np.ndarray
    method: str
    flags: np.ndarray | None = None
    fold_scores: np.ndarray | None = None  # (n_folds, p)
    view_name: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float)
        if self.scores.shape != (len(self.variable_names),):
            raise ValueError("one score per variable is required")
        if self.flags is None:
            self.flags = np.zeros(len(self.variable_names), dtype=bool)

    def top(self, k: int, largest: bool = True) -> np.ndarray:
        """Indices of the ``k`` best scores; ties go to the lower index."""
        k = min(int(k), len(self.scores))
        key = -self.scores if largest else self.scores
        return np.sort(np.argsort(key, kind="stable")[:k])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "view": self.view_name or f"view{self.view_index + 1}",
            "variable": self.variable_names,
            "score": self.scores,
            "method": self.method,
            "flag": self.flags.astype(int),
        })
