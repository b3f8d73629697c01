import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from scipy.integrate import trapezoid
from scipy.interpolate import BSpline

from mvlong.select import JptaModel, jpta_fit, jpta_select, spline_basis
from mvlong.select.jpta import sparse_direction


def knots(T):
    return np.r_[[1.0] * 3, np.arange(1, T + 1, dtype=float), [float(T)] * 3]


def greville(T):
    k = knots(T)
    return np.array([k[i + 1:i + 4].mean() for i in range(T + 2)])


@pytest.mark.parametrize("T", [4, 5, 9])
def test_partition_of_unity(T):
    B, H = spline_basis(T)
    assert B.shape == (T, T + 2) and H.shape == (T + 2, T + 2)
    np.testing.assert_allclose(B.sum(axis=1), 1.0, atol=1e-12)


@pytest.mark.parametrize("T", [4, 6])
def test_affine_trend_has_zero_roughness(T):
    B, H = spline_basis(T)
    theta = 2.0 - 0.7 * greville(T)
    np.testing.assert_allclose(B @ theta, 2.0 - 0.7 * np.arange(1, T + 1), atol=1e-12)
    assert abs(theta @ H @ theta) < 1e-10
    ev = np.linalg.eigvalsh(H)
    assert ev.min() > -1e-10
    assert np.sum(ev < 1e-9 * ev.max()) == 2
    np.testing.assert_array_equal(H, H.T)


def trapezoid_roughness(T, n_points):
    grid = np.linspace(1, T, n_points)
    d2 = BSpline(knots(T), np.eye(T + 2), 3).derivative(2)(grid)
    return trapezoid(d2[:, :, None] * d2[:, None, :], grid, axis=0)


def test_roughness_matches_trapezoid_quadrature():
    T = 5
    _, H = spline_basis(T)
    # the 10^4-point rule itself is only good to ~3e-6 on entries of size ~24
    coarse = trapezoid_roughness(T, 10_001)
    assert np.abs(H - coarse).max() <= 1e-6 * np.abs(H).max()
    fine = trapezoid_roughness(T, 200_001)
    np.testing.assert_allclose(H, fine, rtol=0, atol=1e-6)


def test_short_series_rejected():
    with pytest.raises(ValueError):
        spline_basis(3)


def test_sparse_direction_examples():
    np.testing.assert_allclose(sparse_direction(np.array([3.0, 4.0]), 10.0), [0.6, 0.8])
    x = sparse_direction(np.array([1.0, 0.9, -0.5]), 1.0)
    np.testing.assert_allclose(x, [1.0, 0.0, 0.0], atol=1e-9)
    # tied maxima cannot reach L1 = 1 by thresholding; the first one is kept
    np.testing.assert_array_equal(sparse_direction(np.array([-2.0, 2.0]), 1.0), [-1.0, 0.0])
    assert not sparse_direction(np.zeros(3), 2.0).any()
    x = sparse_direction(np.ones(5), 2.0)
    assert x.sum() == pytest.approx(2.0) and np.linalg.norm(x) == pytest.approx(1.0)


@settings(max_examples=60, deadline=None)
@given(hnp.arrays(float, st.integers(1, 10), elements=st.floats(-10, 10)).filter(lambda a: np.abs(a).max() > 1e-3),
       st.floats(1.0, 5.0))
def test_sparse_direction_feasible_and_optimal(a, c1):
    x = sparse_direction(a, c1)
    assert abs(np.linalg.norm(x) - 1) < 1e-8
    assert np.abs(x).sum() <= c1 + 1e-8
    # no random feasible unit vector does better
    rng = np.random.default_rng(0)
    for _ in range(50):
        z = rng.normal(size=a.size) * (rng.uniform(size=a.size) < 0.5)
        if not z.any():
            continue
        z /= np.linalg.norm(z)
        if np.abs(z).sum() <= c1:
            assert z @ a <= x @ a + 1e-7


def planted(n=10, p1=30, p2=20, T=8, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(1, T + 1)
    g = np.sin(t / 3.0) + 0.1 * t
    u = np.zeros(p1)
    u[rng.choice(p1, 5, replace=False)] = rng.uniform(0.5, 1.0, 5) * rng.choice([-1, 1], 5)
    u /= np.linalg.norm(u)
    v = np.zeros(p2)
    v[rng.choice(p2, 4, replace=False)] = rng.uniform(0.5, 1.0, 4)
    v /= np.linalg.norm(v)
    X1 = np.broadcast_to(np.outer(u, g), (n, p1, T)).copy()
    X2 = np.broadcast_to(np.outer(v, g), (n, p2, T)).copy()
    return X1, X2, u, v


def check_constraints(m: JptaModel):
    c, c1, c2 = m.constraints
    assert abs(np.linalg.norm(m.u) - 1) < 1e-8 and abs(np.linalg.norm(m.v) - 1) < 1e-8
    assert np.abs(m.u).sum() <= c1 + 1e-8 and np.abs(m.v).sum() <= c2 + 1e-8
    assert m.theta @ m.penalty @ m.theta <= c + 1e-8


@pytest.mark.parametrize("seed", range(3))
def test_planted_recovery(seed):
    X1, X2, u_true, v_true = planted(seed=seed)
    m = jpta_fit(X1, X2, c=10.0, c1=5.0, c2=5.0)
    assert m.converged and m.n_iter < 100
    assert abs(m.u @ u_true) > 0.99 and abs(m.v @ v_true) > 0.99
    assert set(np.flatnonzero(u_true)) <= set(np.flatnonzero(np.abs(m.u) > 1e-8))
    assert np.all(np.diff(m.objective) <= 1e-10 * max(1.0, abs(m.objective[0])))
    check_constraints(m)


def test_unit_l1_bound_gives_one_sparse_loading():
    X1, X2, _, _ = planted(seed=4)
    m = jpta_fit(X1, X2, c1=1.0)
    assert np.count_nonzero(np.abs(m.u) > 1e-8) == 1
    check_constraints(m)


def test_view_swap():
    X1, X2, _, _ = planted(seed=5)
    a = jpta_fit(X1, X2, c1=4.0, c2=3.0)
    b = jpta_fit(X2, X1, c1=3.0, c2=4.0)
    np.testing.assert_allclose(a.u, b.v, atol=1e-8)
    np.testing.assert_allclose(a.v, b.u, atol=1e-8)
    cos = abs(a.theta @ b.theta) / (np.linalg.norm(a.theta) * np.linalg.norm(b.theta))
    assert cos == pytest.approx(1.0, abs=1e-8)


def test_noisy_fit_keeps_constraints_and_monotone():
    rng = np.random.default_rng(9)
    X1, X2, _, _ = planted(seed=6)
    X1 = X1 + rng.normal(scale=0.5, size=X1.shape)
    X2 = X2 + rng.normal(scale=0.5, size=X2.shape)
    m = jpta_fit(X1, X2, c=0.5)
    check_constraints(m)
    assert np.all(np.diff(m.objective) <= 1e-10 * abs(m.objective[0]))


def test_fit_errors():
    X1, X2, _, _ = planted()
    with pytest.raises(ValueError):
        jpta_fit(X1, X2[:, :, :-1])
    with pytest.raises(ValueError):
        jpta_fit(X1, X2, c=0.0)
    with pytest.raises(ValueError):
        jpta_fit(X1, X2, c1=0.5)


def test_select_examples():
    m = JptaModel(np.array([0.0, 0.9, -0.95]), np.array([0.5, 0.5, 0.1]), np.zeros(6), np.zeros((4, 6)),
                  np.zeros((6, 6)), (10.0, 2.0, 2.0))
    i1, i2 = jpta_select(m, 2, 1)
    assert set(i1.tolist()) == {1, 2}
    assert i2.tolist() == [0]
    assert jpta_select(m, 3, 3)[0].tolist() == [0, 1, 2]
    with pytest.raises(ValueError):
        jpta_select(m, 4, 1)
