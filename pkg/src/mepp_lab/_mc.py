"""Monte Carlo plumbing: estimates, seed streams, sphere and ball samplers."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import gamma, lgamma, log, pi

import numpy as np


@dataclass(frozen=True)
class Estimate:
    """A Monte Carlo estimate with its standard error."""

    value: float
    std_error: float
    samples: int

    def to_dict(self):
        return {"value": self.value, "std_error": self.std_error, "samples": self.samples}


def mean_and_se(values: np.ndarray) -> Estimate:
    values = np.asarray(values, dtype=float)
    count = values.size
    if count == 0:
        raise ValueError("no samples")
    mean = float(np.mean(values))
    se = float(np.std(values, ddof=1) / np.sqrt(count)) if count > 1 else 0.0
    return Estimate(mean, se, count)


def split_counts(count: int, workers: int) -> list[int]:
    base, extra = divmod(count, workers)
    return [base + (1 if i < extra else 0) for i in range(workers)]


def worker_rngs(seed: int, workers: int = 1) -> list[np.random.Generator]:
    """Per-worker generators.

    Splitting rule: one worker uses ``default_rng(seed)`` directly; ``w > 1``
    workers use the children of ``SeedSequence(seed).spawn(w)`` in order.
    Results are therefore reproducible for a fixed (seed, workers) pair.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if workers == 1:
        return [np.random.default_rng(seed)]
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(workers)]


def parallel_draw(draw, count: int, seed: int, threads: int = 1) -> np.ndarray:
    """Run ``draw(rng, k)`` on each worker stream and stack the results in worker order."""
    rngs = worker_rngs(seed, threads)
    counts = split_counts(count, threads)
    if threads == 1:
        return draw(rngs[0], counts[0])
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(draw, rngs, counts))
    return np.concatenate(parts, axis=0)


def uniform_directions(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    """I.i.d. uniform points on the unit sphere S^{dim-1} (normalized Gaussians)."""
    g = rng.standard_normal((count, dim))
    if dim == 1:
        return np.where(g >= 0.0, 1.0, -1.0)
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    # a Gaussian vector has zero norm with probability 0; guard anyway
    norms[norms == 0.0] = 1.0
    return g / norms


def uniform_ball(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    """I.i.d. uniform points in the closed unit ball of R^dim."""
    u = uniform_directions(rng, count, dim)
    radii = rng.random(count) ** (1.0 / dim)
    return u * radii[:, None]


def log_sphere_area(dim: int, radius: float) -> float:
    """log of the (dim-1)-dimensional area of the sphere of given radius in R^dim.

    For ``dim == 1`` the "sphere" is the two-point set {-r, r} with counting
    measure, so the area is 2 for any r > 0.
    """
    if radius <= 0.0:
        return float("-inf")
    if dim == 1:
        return log(2.0)
    return log(2.0) + 0.5 * dim * log(pi) + (dim - 1) * log(radius) - lgamma(0.5 * dim)


def ball_volume(dim: int, radius: float) -> float:
    return pi ** (0.5 * dim) * radius**dim / gamma(0.5 * dim + 1.0)
