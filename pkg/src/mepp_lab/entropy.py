"""Entropy of measures on energy surfaces, in nats, relative to the surface reference."""
from __future__ import annotations

from dataclasses import dataclass
from math import sqrt
from typing import Sequence

import numpy as np

from .config_space import EnergySurface
from .errors import DEGENERATE, DomainError, PreconditionError
from .measures import CandidateMeasure, sample_measure, sample_uniform

UNIFORM_SAMPLING = "uniform-sampling"
IMPORTANCE_SAMPLING = "importance-sampling"
CLOSED_FORM = "closed-form"
EXACT_ENUMERATION = "exact-enumeration"
ESTIMATORS = (UNIFORM_SAMPLING, IMPORTANCE_SAMPLING)


@dataclass(frozen=True)
class EntropyEstimate:
    value: float
    std_error: float
    samples: int
    estimator: str

    def to_dict(self):
        return {"value": self.value, "std_error": self.std_error, "samples": self.samples, "estimator": self.estimator}


@dataclass(frozen=True)
class ProductionSeries:
    times: tuple[float, ...]
    entropies: tuple[EntropyEstimate, ...]
    rates: tuple[float, ...]
    rate_std_errors: tuple[float, ...]

    def to_dict(self):
        return {
            "times": list(self.times),
            "entropies": [e.to_dict() for e in self.entropies],
            "rates": list(self.rates),
            "rate_std_errors": list(self.rate_std_errors),
        }


def _xlogx(rho: np.ndarray) -> np.ndarray:
    # 0 log 0 := 0
    out = np.zeros_like(rho)
    pos = rho > 0
    out[pos] = rho[pos] * np.log(rho[pos])
    return out


def _summary(values: np.ndarray, estimator: str) -> EntropyEstimate:
    n = values.size
    se = float(np.std(values, ddof=1) / sqrt(n)) if n > 1 else 0.0
    return EntropyEstimate(float(np.mean(values)), se, n, estimator)


def uniform_entropy(surface: EnergySurface, indistinguishable: bool = False):
    """log(area), or log(area / n!) for indistinguishable particles."""
    if surface.degenerate:
        return DEGENERATE
    return EntropyEstimate(surface.log_reference_mass(indistinguishable), 0.0, 0, CLOSED_FORM)


def _two_point_entropy(measure: CandidateMeasure) -> EntropyEstimate:
    # S^0 = {-r, r} with counting reference: the integral is a two-term sum
    r = measure.surface.radius
    rho = measure.evaluate(np.array([[-r], [r]]))
    return EntropyEstimate(float(-_xlogx(rho).sum()), 0.0, 2, EXACT_ENUMERATION)


def entropy(
    measure: CandidateMeasure,
    count: int,
    seed: int,
    estimator: str = UNIFORM_SAMPLING,
    threads: int = 1,
):
    """Monte Carlo estimate of -int rho log rho dv for a probability measure.

    ``uniform-sampling`` averages -ref * rho log rho over uniform points;
    ``importance-sampling`` averages -log rho over points drawn from the measure.
    The one-dimensional (two-point) surface is summed exactly.
    """
    if measure is DEGENERATE or measure.surface.degenerate:
        return DEGENERATE
    if not measure.is_probability:
        raise PreconditionError(f"entropy() needs a probability measure (mass {measure.total_mass}); normalize first")
    if estimator not in ESTIMATORS:
        raise DomainError(f"unknown estimator {estimator!r}")
    if measure.dim == 1:
        return _two_point_entropy(measure)
    if estimator == UNIFORM_SAMPLING:
        x = sample_uniform(measure.surface, count, seed, threads)
        vals = -measure.reference_mass * _xlogx(measure.evaluate(x))
    else:
        x = sample_measure(measure, count, seed, threads)
        vals = -measure.log_evaluate(x)
    return _summary(vals, estimator)


def finite_measure_entropy(measure: CandidateMeasure, count: int, seed: int, threads: int = 1):
    """Entropy of a finite measure eta:  log eta(V) - (1/eta(V)) int rho log rho dv.

    eta(V) and the integral are estimated from the same uniform sample, so the
    result is exactly invariant under rescaling eta; the standard error is
    propagated by the delta method.
    """
    if measure is DEGENERATE or measure.surface.degenerate:
        return DEGENERATE
    if measure.dim == 1:
        r = measure.surface.radius
        rho = measure.evaluate(np.array([[-r], [r]]))
        mass = float(rho.sum())
        if not mass > 0:
            raise DomainError("finite_measure_entropy needs positive mass")
        return EntropyEstimate(float(np.log(mass) - _xlogx(rho).sum() / mass), 0.0, 2, EXACT_ENUMERATION)
    x = sample_uniform(measure.surface, count, seed, threads)
    ref = measure.reference_mass
    a = ref * measure.evaluate(x)
    b = ref * _xlogx(measure.evaluate(x))
    a_bar, b_bar = float(a.mean()), float(b.mean())
    if not a_bar > 0:
        raise DomainError("finite_measure_entropy needs positive mass")
    value = np.log(a_bar) - b_bar / a_bar
    influence = (1.0 / a_bar + b_bar / a_bar**2) * (a - a_bar) - (b - b_bar) / a_bar
    se = float(np.std(influence, ddof=1) / sqrt(a.size))
    return EntropyEstimate(float(value), se, int(a.size), UNIFORM_SAMPLING)


def entropy_gap(
    measure: CandidateMeasure,
    count: int,
    seed: int,
    estimator: str = UNIFORM_SAMPLING,
    threads: int = 1,
):
    """uniform_entropy - entropy: the KL divergence of the measure from the physical one."""
    est = entropy(measure, count, seed, estimator, threads)
    if est is DEGENERATE:
        return DEGENERATE
    top = uniform_entropy(measure.surface, measure.indistinguishable)
    return EntropyEstimate(top.value - est.value, est.std_error, est.samples, est.estimator)


def central_rates(times: Sequence[float], values: Sequence[float], errors: Sequence[float]):
    """Central-difference rates on interior points with independent-error propagation."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    e = np.asarray(errors, dtype=float)
    dt = t[2:] - t[:-2]
    rates = (v[2:] - v[:-2]) / dt
    rate_se = np.sqrt(e[2:] ** 2 + e[:-2] ** 2) / dt
    return tuple(float(r) for r in rates), tuple(float(s) for s in rate_se)


def production_rate(
    series: Sequence[tuple[float, CandidateMeasure]],
    count: int,
    seed: int,
    estimator: str = UNIFORM_SAMPLING,
    threads: int = 1,
) -> ProductionSeries:
    """Entropy at each time and its central-difference rate.

    Every time point reuses ``seed`` (common random numbers), which suppresses
    sampling noise in the differences; the quoted rate errors assume
    independence and are therefore conservative.
    """
    if len(series) < 3:
        raise DomainError("production_rate needs at least 3 time points")
    times = [float(t) for t, _ in series]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise DomainError("times must be strictly increasing")
    ents = []
    for _, measure in series:
        est = entropy(measure, count, seed, estimator, threads)
        if est is DEGENERATE:
            raise DomainError("degenerate energy surface in series")
        ents.append(est)
    rates, rate_se = central_rates(times, [e.value for e in ents], [e.std_error for e in ents])
    return ProductionSeries(tuple(times), tuple(ents), rates, rate_se)
