import math

import numpy as np
import pytest

import mvlong.select.dgb as dgb
from helpers import FAST_TRAIN, planted_dataset
from mvlong.select import BootstrapPlan, dgb_rank


def test_plan_invariants():
    plan = BootstrapPlan.create(30, [7, 10], M=5, seed=3)
    assert plan.M == 5
    for subjects, variables in zip(plan.subject_sets, plan.variable_sets):
        assert subjects.size == 30 and subjects.min() >= 0 and subjects.max() < 30
        assert [v.size for v in variables] == [math.ceil(0.8 * 7), 8]
        for v in variables:
            assert np.unique(v).size == v.size
    again = BootstrapPlan.create(30, [7, 10], M=5, seed=3)
    for a, b in zip(plan.subject_sets, again.subject_sets):
        np.testing.assert_array_equal(a, b)
    other = BootstrapPlan.create(30, [7, 10], M=5, seed=4)
    assert not np.array_equal(plan.subject_sets[0], other.subject_sets[0])


def test_replicate_streams_do_not_collide_across_seeds():
    # seed 1 replicate 0 and seed 0 replicate 1 would share a stream under xor
    a = dgb.replica_rng(1, 0).integers(2**31, size=4)
    b = dgb.replica_rng(0, 1).integers(2**31, size=4)
    assert not np.array_equal(a, b)


def fake_hits(plan, table):
    """Replace training with a fixed hit table keyed by replicate."""
    def run(data, plan_, m, config):
        return table[m]
    return run


def test_eff_prop_arithmetic(monkeypatch):
    data = planted_dataset(0, n=12, sizes=(2, 1), t=4)
    s0 = np.array([0, 1])
    plan = BootstrapPlan(5, tuple(np.arange(12) for _ in range(5)),
                         tuple((s0, np.array([0])) for _ in range(4)) + ((np.array([1]), np.array([0])),), 0)
    hits = {m: [np.array([m < 3, False]), np.array([True])] for m in range(4)}
    hits[4] = [np.array([True]), np.array([False])]
    monkeypatch.setattr(dgb, "_replicate", fake_hits(plan, hits))
    tables = dgb_rank(data, plan)
    # variable 0 of view 1: effective in 3 of the 4 pairs containing it
    assert tables[0].scores[0] == 0.75
    assert tables[0].scores[1] == pytest.approx(1 / 5)
    assert tables[1].scores[0] == pytest.approx(4 / 5)
    assert tables[0].extra["containing"].tolist() == [4, 5]
    assert not tables[0].flags.any()


def test_never_sampled_and_skipped(monkeypatch):
    data = planted_dataset(0, n=12, sizes=(3, 1), t=4)
    plan = BootstrapPlan(2, (np.arange(12), np.arange(12)), ((np.array([0]), np.array([0])),) * 2, 0)
    hits = {0: [np.array([True]), np.array([False])], 1: None}
    monkeypatch.setattr(dgb, "_replicate", fake_hits(plan, hits))
    with pytest.warns(RuntimeWarning, match="replicate 1"):
        tables = dgb_rank(data, plan)
    assert tables[0].scores.tolist() == [1.0, 0.0, 0.0]
    assert tables[0].flags.tolist() == [False, True, True]


def test_empty_out_of_bag_skipped():
    data = planted_dataset(0, n=10, sizes=(2, 2), t=4)
    plan = BootstrapPlan(1, (np.arange(10),), ((np.array([0, 1]), np.array([0, 1])),), 0)
    with pytest.warns(RuntimeWarning):
        tables = dgb_rank(data, plan, FAST_TRAIN)
    assert all(t.flags.all() for t in tables)


def test_plan_must_match_dataset():
    data = planted_dataset(0, n=10, sizes=(2, 2), t=4)
    with pytest.raises(ValueError):
        dgb_rank(data, BootstrapPlan.create(10, [2], M=1))
    with pytest.raises(ValueError):
        dgb_rank(data, BootstrapPlan.create(10, [5, 2], M=1, fraction=1.0))


def test_deterministic_and_bounded():
    data = planted_dataset(1, n=30, sizes=(4, 3), t=4)
    plan = BootstrapPlan.create(30, [4, 3], M=3, seed=2)
    a = dgb_rank(data, plan, FAST_TRAIN)
    b = dgb_rank(data, plan, FAST_TRAIN, jobs=2)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.scores, y.scores)
        assert np.all((x.scores >= 0) & (x.scores <= 1))
        assert x.method == "dgb"
