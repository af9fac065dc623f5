"""Energy-surface restriction of ball integrals.

The surface integral of ``f`` over the sphere of radius r(e) equals the
radial derivative of the ball integral of ``f``.  ``surface_restrict``
evaluates that derivative numerically; ``surface_integral_oracle`` samples
the sphere directly.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import sqrt
from typing import Callable

import numpy as np

from ._mc import ball_volume, mean_and_se, uniform_ball, uniform_directions, worker_rngs
from .errors import DEGENERATE, DomainError


@dataclass(frozen=True)
class BallIntegrand:
    """A continuous functional on the closed ball, vectorized over rows of an (N, n) array."""

    f: Callable[[np.ndarray], np.ndarray]
    name: str = "f"
    radial_profile: Callable[[float], float] | None = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.f(x), dtype=float)


@dataclass(frozen=True)
class RestrictEstimate:
    value: float
    std_error: float
    samples: int
    fd_error: float = 0.0
    step: float = 0.0

    def to_dict(self):
        return dict(self.__dict__)


def named_functional(name: str, radius: float = 1.0) -> BallIntegrand:
    """Named smooth functionals used by the restriction suite.

    ``exp_x1_over_r`` uses the fixed surface radius, so it stays smooth at the origin.
    """
    if name == "one":
        return BallIntegrand(lambda x: np.ones(x.shape[0]), name)
    if name == "norm_sq":
        return BallIntegrand(lambda x: np.einsum("ij,ij->i", x, x), name)
    if name == "x1_sq":
        return BallIntegrand(lambda x: x[:, 0] ** 2, name)
    if name == "exp_x1_over_r":
        return BallIntegrand(lambda x: np.exp(x[:, 0] / radius), name)
    raise DomainError(f"unknown test functional {name!r}")


TEST_FUNCTIONALS = ("one", "norm_sq", "x1_sq", "exp_x1_over_r")


def ball_integral(f: BallIntegrand, dim: int, radius: float, count: int, seed: int) -> RestrictEstimate:
    """Monte Carlo integral of f over the ball of given radius (Lebesgue measure)."""
    if not radius > 0:
        raise DomainError("radius must be positive")
    rng = worker_rngs(seed)[0]
    x = radius * uniform_ball(rng, count, dim)
    est = mean_and_se(ball_volume(dim, radius) * f(x))
    return RestrictEstimate(est.value, est.std_error, est.samples)


def _per_sample_ball(f: BallIntegrand, cloud: np.ndarray, dim: int, rho: float) -> np.ndarray:
    return ball_volume(dim, rho) * f(rho * cloud)


def surface_restrict(
    f: BallIntegrand,
    dim: int,
    energy: float,
    count: int,
    seed: int,
    rel_step: float = 1e-3,
):
    """d/dr of the ball integral at r = sqrt(2 e).

    Central differences with step h = rel_step * r and one Richardson level,
    applied per sample to one fixed unit-ball cloud that is rescaled radially
    (common random numbers). ``fd_error`` is |R(h) - D(h/2)|, an upper
    estimate of the truncation error left after extrapolation.
    """
    if not energy >= 0:
        raise DomainError("energy must be nonnegative")
    if energy == 0:
        return DEGENERATE
    r = sqrt(2.0 * energy)
    h = rel_step * r
    cloud = uniform_ball(worker_rngs(seed)[0], count, dim)

    def diff(step):
        return (_per_sample_ball(f, cloud, dim, r + step) - _per_sample_ball(f, cloud, dim, r - step)) / (2.0 * step)

    d_h = diff(h)
    d_half = diff(0.5 * h)
    rich = (4.0 * d_half - d_h) / 3.0
    est = mean_and_se(rich)
    fd_error = abs(est.value - float(d_half.mean()))
    return RestrictEstimate(est.value, est.std_error, est.samples, fd_error, h)


def surface_integral_oracle(f: BallIntegrand, dim: int, energy: float, count: int, seed: int):
    """Direct Monte Carlo of the surface integral: uniform sphere points times area."""
    if not energy >= 0:
        raise DomainError("energy must be nonnegative")
    if energy == 0:
        return DEGENERATE
    r = sqrt(2.0 * energy)
    x = r * uniform_directions(worker_rngs(seed)[0], count, dim)
    # d/dr of the ball volume is the sphere area (2 points for dim 1)
    area = dim * ball_volume(dim, r) / r
    est = mean_and_se(area * f(x))
    return RestrictEstimate(est.value, est.std_error, est.samples)


def restriction_agrees(restricted: RestrictEstimate, oracle: RestrictEstimate, n_sigma: float = 3.0,
                       rel_tol: float = 1e-3) -> bool:
    combined = sqrt(restricted.std_error**2 + oracle.std_error**2)
    return abs(restricted.value - oracle.value) <= max(n_sigma * combined, rel_tol * abs(oracle.value))
