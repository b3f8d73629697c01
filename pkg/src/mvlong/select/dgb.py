"""Bootstrap-and-permute variable ranking on top of the deep discriminant model.

For each bootstrap pair (subject resample, per-view 80% variable subset) a
model is trained in-bag.  Each sampled variable is then block-permuted across
the out-of-bag subjects (its whole series moves together) and counts as
effective when out-of-bag accuracy strictly drops.  A variable's score is the
fraction of the pairs containing it in which it was effective.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..dataset import MultiViewDataset
from .scores import VariableScoreTable


@dataclass(frozen=True)
class BootstrapPlan:
    M: int
    subject_sets: tuple[np.ndarray, ...]
    variable_sets: tuple[tuple[np.ndarray, ...], ...]
    seed: int

    @classmethod
    def create(cls, n_subjects: int, view_sizes, M: int = 20, seed: int = 0,
               fraction: float = 0.8) -> "BootstrapPlan":
        if M < 1:
            raise ValueError("M must be positive")
        subjects, variables = [], []
        for m in range(M):
            rng = replica_rng(seed, m)
            subjects.append(rng.integers(0, n_subjects, size=n_subjects))
            variables.append(tuple(
                np.sort(rng.choice(p, size=math.ceil(fraction * p), replace=False)) for p in view_sizes
            ))
        return cls(M, tuple(subjects), tuple(variables), seed)

    def out_of_bag(self, m: int, n_subjects: int) -> np.ndarray:
        return np.setdiff1d(np.arange(n_subjects), self.subject_sets[m])


def replica_rng(seed: int, m: int) -> np.random.Generator:
    """Independent stream for replicate ``m`` of a run seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(m)]))


def _replicate(data: MultiViewDataset, plan: BootstrapPlan, m: int, config):
    from ..pipeline.model import train_deepida_gru

    n = data.n_subjects
    oob = plan.out_of_bag(m, n)
    if oob.size == 0:
        return None
    vsets = plan.variable_sets[m]
    reduced = data.with_views([v.take_variables(idx) for v, idx in zip(data.views, vsets)])
    inbag = reduced.subset(plan.subject_sets[m])
    if np.unique(inbag.labels).size < data.n_classes:
        return None
    rng = replica_rng(plan.seed, m)
    model = train_deepida_gru(inbag, config.with_seed(int(rng.integers(2**31))))
    test = reduced.subset(oob)
    base = model.accuracy(test)
    hits = [np.zeros(idx.size, dtype=bool) for idx in vsets]
    for d, view in enumerate(test.views):
        for j in range(view.n_variables):
            perm = rng.permutation(oob.size)
            values = view.values.copy()
            values[:, j, :] = view.values[perm, j, :]
            views = list(test.views)
            views[d] = view.with_values(values)
            # strict decrease only: ties carry no evidence
            hits[d][j] = model.accuracy(test.with_views(views)) < base
    return hits


def dgb_rank(data: MultiViewDataset, plan: BootstrapPlan, config=None, jobs: int = 1) -> list[VariableScoreTable]:
    """``eff_prop`` per variable and view; never-sampled variables score 0 and are flagged."""
    from ..pipeline.model import TrainConfig

    config = config or TrainConfig()
    if len(plan.variable_sets[0]) != data.n_views:
        raise ValueError("plan and dataset disagree on the number of views")
    for vs in plan.variable_sets:
        for idx, v in zip(vs, data.views):
            if idx.size and idx.max() >= v.n_variables:
                raise ValueError("plan refers to variables beyond the view")

    def run(m):
        return _replicate(data, plan, m, config)

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(run, range(plan.M)))
    else:
        results = [run(m) for m in range(plan.M)]

    effective = [np.zeros(v.n_variables) for v in data.views]
    containing = [np.zeros(v.n_variables) for v in data.views]
    for m, hits in enumerate(results):
        if hits is None:
            warnings.warn(f"bootstrap replicate {m} skipped (empty out-of-bag set or missing class)",
                          RuntimeWarning, stacklevel=2)
            continue
        for d, idx in enumerate(plan.variable_sets[m]):
            containing[d][idx] += 1
            effective[d][idx] += hits[d]
    tables = []
    for d, v in enumerate(data.views):
        seen = containing[d] > 0
        score = np.divide(effective[d], containing[d], out=np.zeros(v.n_variables), where=seen)
        tables.append(VariableScoreTable(d, list(v.variable_names), score, "dgb", flags=~seen,
                                         view_name=data.view_names[d],
                                         extra={"containing": containing[d], "effective": effective[d]}))
    return tables
