"""Candidate measures on energy surfaces.

A measure is represented by its density with respect to the surface reference
measure. For distinguishable measures the reference is the surface area
measure ``v_e`` (total ``area``). For indistinguishable measures it is the
area measure on the quotient by coefficient permutations (total
``area / n!``); such densities are permutation invariant and are evaluated and
sampled on the full sphere.

Densities depend on the direction ``x / |x|`` only, so one density object can
be placed on surfaces of any radius; the radius enters through the mass.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field, replace
from math import factorial, log, pi
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special
from scipy.spatial import cKDTree

from ._mc import Estimate, log_sphere_area, mean_and_se, parallel_draw, uniform_directions
from .config_space import EnergySurface
from .errors import DEGENERATE, DomainError

#: Exact orbit sums up to this dimension; sampled permutations beyond.
EXACT_ORBIT_MAX_DIM = 6
#: Number of sampled permutations in the sampled-orbit regime.
ORBIT_SAMPLES = 720


def directions(points: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(points, dtype=float))
    if x.shape[1] == 1:
        return np.where(x >= 0.0, 1.0, -1.0)
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _log_unit_area(dim: int) -> float:
    return log_sphere_area(dim, 1.0)


def _random_permutations(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    return np.argsort(rng.random((count, dim)), axis=1)


class Density:
    """Nonnegative directional density. Subclasses define ``log_density``."""

    family = "abstract"

    def log_density(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return np.exp(self.log_density(points))

    def unit_integral(self, dim: int) -> float | None:
        """Integral over the unit sphere S^{dim-1}, or None if unknown in closed form."""
        return None

    def scaled(self, c: float) -> "Density":
        raise NotImplementedError

    def sample_directions(self, rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
        """Directions distributed proportionally to this density."""
        raise NotImplementedError(f"no sampler for family {self.family!r}")

    def params(self) -> dict:
        return {}

    def describe(self) -> dict:
        return {"family": self.family, **self.params()}


def _log_c(c: float) -> float:
    if c < 0:
        raise DomainError("scale factor must be nonnegative")
    return log(c) if c > 0 else float("-inf")


@dataclass(frozen=True)
class Uniform(Density):
    log_scale: float = 0.0
    family = "uniform"

    def log_density(self, points):
        return np.full(np.atleast_2d(points).shape[0], self.log_scale)

    def unit_integral(self, dim):
        return float(np.exp(self.log_scale + _log_unit_area(dim)))

    def scaled(self, c):
        return replace(self, log_scale=self.log_scale + _log_c(c))

    def sample_directions(self, rng, count, dim):
        return uniform_directions(rng, count, dim)

    def params(self):
        return {"log_scale": self.log_scale}


def _as_unit(mean: Sequence[float]) -> tuple[float, ...]:
    m = np.asarray(mean, dtype=float)
    norm = np.linalg.norm(m)
    if norm == 0:
        raise DomainError("mean direction must be nonzero")
    return tuple(float(v) for v in m / norm)


def vmf_log_normalizer(dim: int, kappa: float) -> float:
    """log of the integral of exp(kappa * mu.u) over the unit sphere S^{dim-1}."""
    if kappa == 0.0:
        return _log_unit_area(dim)
    nu = 0.5 * dim - 1.0
    return 0.5 * dim * log(2.0 * pi) + log(special.ive(nu, kappa)) + kappa - nu * log(kappa)


def _wood_cosines(rng: np.random.Generator, kappa: float, dim: int, count: int) -> np.ndarray:
    """Cosines t = mu.u of vMF draws on S^{dim-1}, dim >= 2 (Wood's rejection scheme)."""
    m1 = dim - 1.0
    b = m1 / (2.0 * kappa + np.sqrt(4.0 * kappa**2 + m1**2))
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + m1 * np.log(1.0 - x0**2)
    out = np.empty(count)
    filled = 0
    while filled < count:
        need = count - filled
        batch = max(16, int(need * 1.3))
        z = rng.beta(0.5 * m1, 0.5 * m1, size=batch)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = rng.random(batch)
        ok = kappa * w + m1 * np.log(1.0 - x0 * w) - c >= np.log(u)
        acc = w[ok][:need]
        out[filled:filled + acc.size] = acc
        filled += acc.size
    return out


@dataclass(frozen=True)
class VonMisesFisher(Density):
    mean: tuple[float, ...]
    kappa: float
    log_scale: float = 0.0
    family = "von-mises-fisher"

    def __post_init__(self):
        object.__setattr__(self, "mean", _as_unit(self.mean))
        if self.kappa < 0:
            raise DomainError("kappa must be nonnegative")

    def log_density(self, points):
        u = directions(points)
        return self.log_scale + self.kappa * (u @ np.asarray(self.mean))

    def unit_integral(self, dim):
        return float(np.exp(self.log_scale + vmf_log_normalizer(dim, self.kappa)))

    def scaled(self, c):
        return replace(self, log_scale=self.log_scale + _log_c(c))

    def sample_directions(self, rng, count, dim):
        mu = np.asarray(self.mean)
        if dim == 1:
            p_plus = 1.0 / (1.0 + np.exp(-2.0 * self.kappa * mu[0]))
            return np.where(rng.random(count) < p_plus, 1.0, -1.0)[:, None]
        if self.kappa == 0.0:
            return uniform_directions(rng, count, dim)
        t = _wood_cosines(rng, self.kappa, dim, count)
        v = rng.standard_normal((count, dim))
        v -= np.outer(v @ mu, mu)
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return t[:, None] * mu[None, :] + np.sqrt(np.clip(1.0 - t * t, 0.0, None))[:, None] * v

    def params(self):
        return {"mean": list(self.mean), "kappa": self.kappa, "log_scale": self.log_scale}


@dataclass(frozen=True)
class PolynomialTilt(Density):
    """``scale * max(0, 1 + slope * u[index])``."""

    index: int
    slope: float
    log_scale: float = 0.0
    family = "polynomial-tilt"

    def log_density(self, points):
        u = directions(points)
        base = 1.0 + self.slope * u[:, self.index]
        with np.errstate(divide="ignore"):
            return self.log_scale + np.log(np.clip(base, 0.0, None))

    def unit_integral(self, dim):
        a = self.slope
        if dim == 1:
            total = max(0.0, 1.0 + a) + max(0.0, 1.0 - a)
        elif abs(a) <= 1.0:
            total = float(np.exp(_log_unit_area(dim)))
        else:
            # latitude integral over t = u[index]; marginal weight (1-t^2)^((n-3)/2)
            ring = float(np.exp(_log_unit_area(dim - 1)))
            alpha = 0.5 * (dim - 3)
            t0 = -1.0 / a
            lo, hi = (t0, 1.0) if a > 0 else (-1.0, t0)
            total = ring * _tilt_latitude_integral(a, lo, hi, alpha)
        return total * float(np.exp(self.log_scale))

    def scaled(self, c):
        return replace(self, log_scale=self.log_scale + _log_c(c))

    def sample_directions(self, rng, count, dim):
        bound = 1.0 + abs(self.slope)
        out = np.empty((count, dim))
        filled = 0
        while filled < count:
            batch = max(16, 2 * (count - filled))
            u = uniform_directions(rng, batch, dim)
            w = np.clip(1.0 + self.slope * u[:, self.index], 0.0, None)
            acc = u[rng.random(batch) * bound < w][: count - filled]
            out[filled:filled + len(acc)] = acc
            filled += len(acc)
        return out

    def params(self):
        return {"index": self.index, "slope": self.slope, "log_scale": self.log_scale}


def _tilt_latitude_integral(a: float, lo: float, hi: float, alpha: float) -> float:
    """int_lo^hi (1 + a t) (1 - t^2)^alpha dt, with the endpoint singularity handled by QUADPACK."""
    def integrand(t):
        return (1.0 + a * t) * (1.0 - t * t) ** alpha

    if alpha >= 0:
        val, _ = integrate.quad(integrand, lo, hi, epsabs=1e-13, epsrel=1e-12)
        return val
    # (1 - t^2)^alpha = (1 - t)^alpha (1 + t)^alpha; one endpoint of [lo, hi] is +-1
    if hi == 1.0:
        val, _ = integrate.quad(lambda t: (1.0 + a * t) * (1.0 + t) ** alpha, lo, hi,
                                weight="alg", wvar=(0.0, alpha), epsabs=1e-13, epsrel=1e-12)
    else:
        val, _ = integrate.quad(lambda t: (1.0 + a * t) * (1.0 - t) ** alpha, lo, hi,
                                weight="alg", wvar=(alpha, 0.0), epsabs=1e-13, epsrel=1e-12)
    return val


@dataclass(frozen=True)
class Mixture(Density):
    weights: tuple[float, ...]
    components: tuple[Density, ...]
    family = "mixture"

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "components", tuple(self.components))
        if len(self.weights) != len(self.components) or not self.weights:
            raise DomainError("mixture needs one weight per component")
        if any(w < 0 for w in self.weights):
            raise DomainError("mixture weights must be nonnegative")

    def log_density(self, points):
        with np.errstate(divide="ignore"):
            logs = np.stack([np.log(w) + c.log_density(points) for w, c in zip(self.weights, self.components)])
        return special.logsumexp(logs, axis=0)

    def unit_integral(self, dim):
        parts = [c.unit_integral(dim) for c in self.components]
        if any(p is None for p in parts):
            return None
        return float(sum(w * p for w, p in zip(self.weights, parts)))

    def scaled(self, c):
        return replace(self, weights=tuple(w * c for w in self.weights))

    def sample_directions(self, rng, count, dim):
        masses = np.array([w * c.unit_integral(dim) for w, c in zip(self.weights, self.components)])
        pick = rng.choice(len(masses), size=count, p=masses / masses.sum())
        out = np.empty((count, dim))
        for j, comp in enumerate(self.components):
            idx = np.flatnonzero(pick == j)
            if idx.size:
                out[idx] = comp.sample_directions(rng, idx.size, dim)
        return out

    def params(self):
        return {"weights": list(self.weights), "components": [c.describe() for c in self.components]}


@dataclass(frozen=True, eq=False)
class Tabulated(Density):
    """Piecewise-constant density: value of the nearest tabulated direction."""

    table_directions: np.ndarray
    values: np.ndarray
    log_scale: float = 0.0
    family = "tabulated"
    _tree: cKDTree = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        d = directions(self.table_directions)
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.shape[0] != d.shape[0]:
            raise DomainError("one density value per tabulated point is required")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise DomainError("tabulated density values must be finite and nonnegative")
        object.__setattr__(self, "table_directions", d)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "_tree", cKDTree(d))

    def log_density(self, points):
        _, idx = self._tree.query(directions(points))
        with np.errstate(divide="ignore"):
            return self.log_scale + np.log(self.values[idx])

    def scaled(self, c):
        return Tabulated(self.table_directions, self.values, self.log_scale + _log_c(c))

    def sample_directions(self, rng, count, dim):
        bound = float(self.values.max())
        out = np.empty((count, dim))
        filled = 0
        while filled < count:
            batch = max(16, 2 * (count - filled))
            u = uniform_directions(rng, batch, dim)
            _, idx = self._tree.query(u)
            acc = u[rng.random(batch) * bound < self.values[idx]][: count - filled]
            out[filled:filled + len(acc)] = acc
            filled += len(acc)
        return out

    def params(self):
        return {"points": int(self.values.size), "log_scale": self.log_scale}


@dataclass(frozen=True)
class Symmetrized(Density):
    """Average of ``base`` over coefficient permutations.

    ``permutations`` is None for the exact orbit (all n! permutations);
    otherwise it holds the sampled permutations drawn with ``seed``.
    """

    base: Density
    dim: int
    permutations: tuple[tuple[int, ...], ...] | None = None
    seed: int | None = None
    family = "symmetrized"

    def _perms(self):
        if self.permutations is None:
            return list(itertools.permutations(range(self.dim)))
        return [list(p) for p in self.permutations]

    def _orbit_logs(self, points):
        x = np.atleast_2d(points)
        for p in self._perms():
            yield self.base.log_density(x[:, p])

    def log_density(self, points):
        acc = None
        count = 0
        for lv in self._orbit_logs(points):
            acc = lv if acc is None else np.logaddexp(acc, lv)
            count += 1
        return acc - log(count)

    def orbit_std_error(self, points) -> np.ndarray:
        """Pointwise standard error of the orbit average (zero for the exact orbit)."""
        x = np.atleast_2d(points)
        if self.permutations is None:
            return np.zeros(x.shape[0])
        vals = np.stack([np.exp(lv) for lv in self._orbit_logs(x)])
        return vals.std(axis=0, ddof=1) / np.sqrt(vals.shape[0])

    def unit_integral(self, dim):
        return self.base.unit_integral(dim)

    def scaled(self, c):
        return replace(self, base=self.base.scaled(c))

    def sample_directions(self, rng, count, dim):
        u = self.base.sample_directions(rng, count, dim)
        if self.permutations is None:
            perms = _random_permutations(rng, count, dim)
        else:
            table = np.asarray(self.permutations)
            perms = table[rng.integers(0, len(table), size=count)]
        return np.take_along_axis(u, perms, axis=1)

    def params(self):
        return {
            "base": self.base.describe(),
            "orbit": "exact" if self.permutations is None else "sampled",
            "orbit_size": factorial(self.dim) if self.permutations is None else len(self.permutations),
            "seed": self.seed,
        }


# -- measures -------------------------------------------------------------------------

@dataclass(frozen=True)
class CandidateMeasure:
    surface: EnergySurface
    density: Density
    total_mass: float
    indistinguishable: bool = False
    invariance: str = "none"

    @property
    def dim(self) -> int:
        return self.surface.dim

    @property
    def log_reference_mass(self) -> float:
        return self.surface.log_reference_mass(self.indistinguishable)

    @property
    def reference_mass(self) -> float:
        return self.surface.reference_mass(self.indistinguishable)

    @property
    def is_probability(self) -> bool:
        return abs(self.total_mass - 1.0) <= 1e-9

    def evaluate(self, points) -> np.ndarray:
        return self.density(points)

    def log_evaluate(self, points) -> np.ndarray:
        return self.density.log_density(points)

    def describe(self) -> dict:
        return {
            "dim": self.dim,
            "energy": self.surface.energy,
            "radius": self.surface.radius,
            "indistinguishable": self.indistinguishable,
            "invariance": self.invariance,
            "total_mass": self.total_mass,
            "density": self.density.describe(),
        }


def sample_uniform(surface: EnergySurface, count: int, seed: int, threads: int = 1):
    """I.i.d. uniform points on the energy surface (normalized Gaussian draws scaled by r)."""
    if surface.degenerate:
        return DEGENERATE
    if count < 1:
        raise DomainError("count must be >= 1")
    n, r = surface.dim, surface.radius
    return parallel_draw(lambda rng, k: r * uniform_directions(rng, k, n), count, seed, threads)


def sample_measure(measure: CandidateMeasure, count: int, seed: int, threads: int = 1):
    """I.i.d. points distributed according to the (normalized) measure."""
    s = measure.surface
    if s.degenerate:
        return DEGENERATE
    return parallel_draw(
        lambda rng, k: s.radius * measure.density.sample_directions(rng, k, s.dim), count, seed, threads
    )


def _mass_from_unit_integral(surface: EnergySurface, unit: float, indistinguishable: bool) -> float:
    mass = unit * surface.radius ** (surface.dim - 1)
    if indistinguishable:
        mass /= factorial(surface.dim)
    return mass


def estimate_mass(measure: CandidateMeasure, count: int, seed: int, threads: int = 1) -> Estimate:
    x = sample_uniform(measure.surface, count, seed, threads)
    if x is DEGENERATE:
        return DEGENERATE
    vals = measure.reference_mass * measure.evaluate(x)
    return mean_and_se(vals)


def make_measure(
    surface: EnergySurface,
    density: Density,
    indistinguishable: bool = False,
    invariance: str = "none",
    *,
    count: int = 100_000,
    seed: int = 0,
):
    """Wrap a density as a measure; the mass is closed-form when the family knows it,
    otherwise a Monte Carlo estimate with ``count`` uniform points."""
    if surface.degenerate:
        return DEGENERATE
    unit = density.unit_integral(surface.dim)
    if unit is not None:
        mass = _mass_from_unit_integral(surface, unit, indistinguishable)
    else:
        probe = CandidateMeasure(surface, density, 1.0, indistinguishable, invariance)
        mass = estimate_mass(probe, count, seed).value
    return CandidateMeasure(surface, density, float(mass), indistinguishable, invariance)


def physical_measure(surface: EnergySurface, indistinguishable: bool = False):
    """Uniform probability measure: density 1 / reference mass."""
    if surface.degenerate:
        return DEGENERATE
    density = Uniform(log_scale=-surface.log_reference_mass(indistinguishable))
    tag = "orthogonal+permutation"
    return CandidateMeasure(surface, density, 1.0, indistinguishable, tag)


def normalize(measure: CandidateMeasure, count: int | None = None, seed: int = 0, threads: int = 1):
    """Rescale to a probability measure.

    The mass is ``measure.total_mass`` unless ``count`` is given, in which case
    it is re-estimated by Monte Carlo.
    """
    if measure is DEGENERATE:
        return DEGENERATE
    mass = measure.total_mass if count is None else estimate_mass(measure, count, seed, threads).value
    if not mass > 0.0 or not np.isfinite(mass):
        raise DomainError(f"cannot normalize a measure of mass {mass}")
    return replace(measure, density=measure.density.scaled(1.0 / mass), total_mass=1.0)


def scale(measure: CandidateMeasure, c: float) -> CandidateMeasure:
    return replace(measure, density=measure.density.scaled(c), total_mass=measure.total_mass * c)


def symmetrize(measure: CandidateMeasure, seed: int = 0, samples: int = ORBIT_SAMPLES) -> CandidateMeasure:
    """Orbit average of the density over coefficient permutations.

    The result lives on the quotient space; its mass there is the
    distinguishable mass divided by n!. An indistinguishable measure is
    already an orbit average and is returned unchanged.
    """
    if measure is DEGENERATE:
        return DEGENERATE
    if measure.indistinguishable:
        return measure
    n = measure.dim
    if n <= EXACT_ORBIT_MAX_DIM:
        density = Symmetrized(measure.density, n)
    else:
        rng = np.random.default_rng(seed)
        perms = tuple(tuple(int(i) for i in p) for p in _random_permutations(rng, samples, n))
        density = Symmetrized(measure.density, n, perms, seed)
    invariance = measure.invariance if "permutation" in measure.invariance else f"{measure.invariance}+permutation"
    return CandidateMeasure(measure.surface, density, measure.total_mass / factorial(n), True, invariance)


def measure_of_set(
    measure: CandidateMeasure, indicator: Callable[[np.ndarray], np.ndarray], count: int, seed: int, threads: int = 1
) -> Estimate:
    """Monte Carlo estimate of mu(A) for A = {x : indicator(x)} on the surface.

    For indistinguishable measures the indicator should be permutation
    invariant (a set of orbits).
    """
    x = sample_uniform(measure.surface, count, seed, threads)
    if x is DEGENERATE:
        return DEGENERATE
    hit = np.asarray(indicator(x), dtype=bool)
    return mean_and_se(measure.reference_mass * measure.evaluate(x) * hit)


def permutation_deviation(measure: CandidateMeasure, count: int = 256, perms: int = 16, seed: int = 0) -> float:
    """Largest relative change of the density under random coefficient permutations."""
    rng = np.random.default_rng(seed)
    x = sample_uniform(measure.surface, count, int(rng.integers(2**31)))
    base = measure.evaluate(x)
    worst = 0.0
    for p in _random_permutations(rng, perms, measure.dim):
        diff = np.abs(measure.evaluate(x[:, p]) - base) / np.maximum(base, 1e-300)
        worst = max(worst, float(diff.max()))
    return worst


# -- shipped families --------------------------------------------------------------

def vmf_measure(surface: EnergySurface, mean, kappa: float, normalized: bool = True):
    if surface.degenerate:
        return DEGENERATE
    m = make_measure(surface, VonMisesFisher(tuple(mean), kappa), invariance="axial")
    return normalize(m) if normalized else m


def tilt_measure(surface: EnergySurface, index: int, slope: float, normalized: bool = True):
    if surface.degenerate:
        return DEGENERATE
    if not 0 <= index < surface.dim:
        raise DomainError(f"tilt index {index} outside 0..{surface.dim - 1}")
    m = make_measure(surface, PolynomialTilt(index, slope), invariance="axial")
    return normalize(m) if normalized else m


def mixture_measure(surface: EnergySurface, weights, components, normalized: bool = True):
    if surface.degenerate:
        return DEGENERATE
    m = make_measure(surface, Mixture(tuple(weights), tuple(components)))
    return normalize(m) if normalized else m


def tabulated_measure(surface: EnergySurface, density: Tabulated, count: int = 100_000, seed: int = 0):
    if surface.degenerate:
        return DEGENERATE
    return normalize(make_measure(surface, density, count=count, seed=seed))


def load_tabulated_csv(path: str | Path) -> Tabulated:
    """Read rows of ``coord_1, ..., coord_n, density`` (a header row is optional)."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                if rows:
                    raise DomainError(f"non-numeric row in {path}: {row}")
                continue  # header
    if not rows:
        raise DomainError(f"no rows in {path}")
    arr = np.asarray(rows)
    return Tabulated(arr[:, :-1], arr[:, -1])


def random_tabulated(rng: np.random.Generator, dim: int, points: int = 256) -> Tabulated:
    return Tabulated(uniform_directions(rng, points, dim), rng.gamma(2.0, 1.0, size=points))
