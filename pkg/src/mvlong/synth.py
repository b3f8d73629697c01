"""Two-view ARMA(1,1) benchmark generator.

Class 2's noise covariance is pulled away from class 1's by ``epsilon``
and its ARMA coefficients are shifted by ``eta``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import MultiViewDataset, ViewTensor


@dataclass(frozen=True)
class SynthConfig:
    n_subjects: int = 500
    p1: int = 250
    p2: int = 250
    t: int = 20
    epsilon: float = 0.0
    eta: float = 0.0
    seed: int = 0
    burn_in: int = 0

    def __post_init__(self):
        if min(self.n_subjects, self.p1, self.p2, self.t) < 1:
            raise ValueError("all dimensions must be >= 1")
        if not (0.0 <= self.epsilon <= 1.0 and 0.0 <= self.eta <= 1.0):
            raise ValueError("epsilon and eta must lie in [0, 1]")
        if self.burn_in < 0 or self.seed < 0:
            raise ValueError("burn_in and seed must be non-negative")


@dataclass(frozen=True)
class ArmaParams:
    """AR (``phi``) and MA (``delta``) coefficients indexed ``[view, class]``."""

    phi: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        delta = np.asarray(self.delta, dtype=float)
        if phi.shape != (2, 2) or delta.shape != (2, 2):
            raise ValueError("phi and delta must be 2 x 2 (view x class)")
        if np.any(np.abs(phi) >= 1):
            raise ValueError("AR coefficients must satisfy |phi| < 1")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "delta", delta)


def make_arma_params(eta: float) -> ArmaParams:
    phi = np.array([[0.5, 0.5 - eta], [0.7, 0.7 - eta]])
    delta = np.array([[0.4, 0.4 - eta], [0.6, 0.6 - eta]])
    return ArmaParams(phi, delta)


def _power_sample(rng, a: float, size) -> np.ndarray:
    # inverse CDF of f(x) = a x^(a-1) on [0, 1]
    return rng.uniform(size=size) ** (1.0 / a)


def _covariance_factors(p_total: int, rng) -> tuple[np.ndarray, np.ndarray]:
    c_unif = rng.uniform(size=(p_total, p_total))
    c_power = _power_sample(rng, 10.0, (p_total, p_total))
    return c_unif, c_power


def make_covariances(p_total: int, epsilon: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Class noise covariances ``C1 = U'U`` and ``C2 = (1-eps) C1 + eps P'P``."""
    c_unif, c_power = _covariance_factors(p_total, rng)
    c1 = c_unif.T @ c_unif
    c2 = (1.0 - epsilon) * c1 + epsilon * (c_power.T @ c_power)
    return c1, c2


def generate_dataset(config: SynthConfig, arma: ArmaParams | None = None) -> MultiViewDataset:
    """Draw one benchmark dataset.

    ``arma`` overrides the coefficients derived from ``config.eta``.  Noise is
    drawn through the Gram factors, so ``w = U'z`` has covariance ``U'U``
    exactly and no matrix square root is needed.
    """
    rng = np.random.default_rng(config.seed)
    p1, p2 = config.p1, config.p2
    p = p1 + p2
    eps = config.epsilon
    c_unif, c_power = _covariance_factors(p, rng)
    arma = arma or make_arma_params(config.eta)

    n, t = config.n_subjects, config.t
    labels = rng.integers(0, 2, size=n)
    view_of = np.r_[np.zeros(p1, dtype=int), np.ones(p2, dtype=int)]
    phi = arma.phi[view_of][:, labels].T  # (n, p)
    delta = arma.delta[view_of][:, labels].T
    second = (labels == 1)[:, None]

    steps = t + config.burn_in
    x = np.zeros((n, p))
    w_prev = np.zeros((n, p))
    out = np.empty((n, p, t))
    for step in range(steps):
        z1 = rng.standard_normal((n, p))
        z2 = rng.standard_normal((n, p))
        w1 = z1 @ c_unif
        w2 = np.sqrt(1.0 - eps) * w1 + np.sqrt(eps) * (z2 @ c_power)
        w = np.where(second, w2, w1)
        x = phi * x + w + delta * w_prev
        w_prev = w
        if step >= config.burn_in:
            out[:, :, step - config.burn_in] = x

    times = [float(k + 1) for k in range(t)]
    views = (
        ViewTensor(out[:, :p1], [f"v1_{j + 1:03d}" for j in range(p1)], times),
        ViewTensor(out[:, p1:], [f"v2_{j + 1:03d}" for j in range(p2)], times),
    )
    ids = [f"s{k + 1:04d}" for k in range(n)]
    return MultiViewDataset(views, labels, ids, ("1", "2"), ("view1", "view2"))
