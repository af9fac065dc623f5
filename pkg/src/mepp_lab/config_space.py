"""Truncated configuration space: divergence-free basis, energy surfaces,
and the factorial restriction maps between cylinder subspaces."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from math import exp, factorial, lgamma, log, pi, sqrt

import numpy as np

from ._mc import log_sphere_area
from .errors import CapacityError, DomainError

#: Box side; wavevectors are integers on [0, 2*pi)^3.
BOX_LENGTH = 2.0 * pi
BOX_VOLUME = BOX_LENGTH**3
ORDERING = "k2-lex-pol"

# polarization index -> (trig part, transverse direction)
_POLARIZATIONS = {0: ("cos", 0), 1: ("cos", 1), 2: ("sin", 0), 3: ("sin", 1)}


def _cross(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


def transverse_pair(k: tuple[int, int, int]) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Two integer vectors orthogonal to k and to each other.

    Integer arithmetic keeps k . e == 0 exact. The helper axis is the
    coordinate axis least aligned with k (lowest index on ties).
    """
    axis = min(range(3), key=lambda i: (abs(k[i]), i))
    a = tuple(1 if i == axis else 0 for i in range(3))
    e1 = _cross(k, a)
    e2 = _cross(k, e1)
    return e1, e2


def admissible_wavevectors(grid_size: int) -> list[tuple[int, int, int]]:
    """Nonzero wavevectors resolved below Nyquist, one per +/- pair, in basis order."""
    kmax = (grid_size - 1) // 2
    rng = range(-kmax, kmax + 1)
    out = []
    for k in itertools.product(rng, rng, rng):
        first = next((c for c in k if c != 0), 0)
        if first > 0:
            out.append(k)
    out.sort(key=lambda k: (k[0] ** 2 + k[1] ** 2 + k[2] ** 2, k))
    return out


@dataclass(frozen=True)
class BasisSpec:
    """Ordered orthonormal divergence-free real Fourier basis on the periodic cube.

    Each mode is ``sqrt(2/|V|) * trig(k.x) * e`` with ``trig`` in {cos, sin}
    and ``e`` one of two unit vectors transverse to ``k``.
    """

    grid_size: int
    dim: int
    modes: tuple[tuple[tuple[int, int, int], int], ...]
    ordering: str = ORDERING

    def polarization(self, i: int) -> np.ndarray:
        k, p = self.modes[i]
        e = np.array(transverse_pair(k)[_POLARIZATIONS[p][1]], dtype=float)
        return e / np.linalg.norm(e)

    def integer_polarization(self, i: int) -> tuple[int, int, int]:
        k, p = self.modes[i]
        return transverse_pair(k)[_POLARIZATIONS[p][1]]

    def grid(self) -> np.ndarray:
        x = np.arange(self.grid_size) * (BOX_LENGTH / self.grid_size)
        return np.stack(np.meshgrid(x, x, x, indexing="ij"))

    def field(self, i: int, grid: np.ndarray | None = None) -> np.ndarray:
        """Mode ``i`` sampled on the grid, shape (3, N, N, N)."""
        X = self.grid() if grid is None else grid
        k, p = self.modes[i]
        phase = k[0] * X[0] + k[1] * X[1] + k[2] * X[2]
        trig = np.cos(phase) if _POLARIZATIONS[p][0] == "cos" else np.sin(phase)
        e = self.polarization(i)
        return sqrt(2.0 / BOX_VOLUME) * trig[None] * e[:, None, None, None]

    def fields(self) -> np.ndarray:
        X = self.grid()
        return np.stack([self.field(i, X) for i in range(self.dim)])

    def gram(self) -> np.ndarray:
        """L2(V) Gram matrix by grid quadrature (exact for sub-Nyquist modes)."""
        F = self.fields().reshape(self.dim, -1)
        cell = BOX_VOLUME / self.grid_size**3
        return cell * (F @ F.T)

    def synthesize(self, coefficients) -> np.ndarray:
        c = np.asarray(coefficients, dtype=float)
        if c.shape != (self.dim,):
            raise ValueError(f"expected {self.dim} coefficients, got shape {c.shape}")
        return np.tensordot(c, self.fields(), axes=1)

    def project(self, velocity: np.ndarray) -> np.ndarray:
        """Coefficients of the orthogonal projection of a grid velocity field."""
        F = self.fields().reshape(self.dim, -1)
        cell = BOX_VOLUME / self.grid_size**3
        return cell * (F @ np.asarray(velocity, dtype=float).reshape(-1))


def build_basis(grid_size: int, dim: int) -> BasisSpec:
    if grid_size < 3:
        raise DomainError("grid_size must be >= 3")
    if dim < 1:
        raise DomainError("dim must be >= 1")
    ks = admissible_wavevectors(grid_size)
    capacity = 4 * len(ks)
    if dim > capacity:
        raise CapacityError(f"dim={dim} exceeds the {capacity} modes available on grid {grid_size}")
    modes = tuple((k, p) for k in ks for p in range(4))[:dim]
    return BasisSpec(grid_size=grid_size, dim=dim, modes=modes)


@dataclass(frozen=True)
class EnergySurface:
    """Sphere of coefficient vectors with kinetic energy ``energy`` in ``dim`` dimensions."""

    dim: int
    energy: float
    radius: float
    area: float
    log_area: float

    @property
    def degenerate(self) -> bool:
        return self.radius == 0.0

    def log_reference_mass(self, indistinguishable: bool) -> float:
        if indistinguishable:
            return self.log_area - lgamma(self.dim + 1)
        return self.log_area

    def reference_mass(self, indistinguishable: bool) -> float:
        return exp(self.log_reference_mass(indistinguishable))


def make_surface(dim: int, energy: float) -> EnergySurface:
    if dim < 1:
        raise DomainError("dim must be >= 1")
    if not energy >= 0.0:
        raise DomainError(f"energy must be nonnegative, got {energy}")
    radius = sqrt(2.0 * energy)
    if radius == 0.0:
        return EnergySurface(dim, float(energy), 0.0, 0.0, float("-inf"))
    la = log_sphere_area(dim, radius)
    return EnergySurface(dim, float(energy), radius, exp(la), la)


@dataclass(frozen=True)
class RestrictionMap:
    """g_{to,from}: cylinder sets of the ``from_dim`` space onto the ``to_dim`` space,
    weighted by to_dim!/from_dim!."""

    from_dim: int
    to_dim: int
    factor: Fraction = field(init=False)

    def __post_init__(self):
        if not 1 <= self.to_dim <= self.from_dim:
            raise DomainError(f"need 1 <= to_dim <= from_dim, got {self.to_dim}, {self.from_dim}")
        object.__setattr__(self, "factor", Fraction(factorial(self.to_dim), factorial(self.from_dim)))

    @property
    def log_factor(self) -> float:
        return lgamma(self.to_dim + 1) - lgamma(self.from_dim + 1)

    def then(self, outer: "RestrictionMap") -> "RestrictionMap":
        """``outer o self``: restrict with ``self`` first, then with ``outer``."""
        return compose(outer, self)


def restriction_map(from_dim: int, to_dim: int) -> RestrictionMap:
    return RestrictionMap(from_dim, to_dim)


def compose(outer: RestrictionMap, inner: RestrictionMap) -> RestrictionMap:
    if outer.from_dim != inner.to_dim:
        raise DomainError(f"cannot compose g({outer.to_dim}<-{outer.from_dim}) after g({inner.to_dim}<-{inner.from_dim})")
    out = RestrictionMap(inner.from_dim, outer.to_dim)
    # the composition law holds by construction; keep the product as the stored value
    assert out.factor == outer.factor * inner.factor
    return out


# -- cylinder-set measure consistency ------------------------------------------------

class _CylinderClouds:
    """Standard Gaussian sample clouds, one independent stream per dimension.

    The Gaussian product family is a consistent (marginalization-stable) family
    of distinguishable cylinder measures. Stream for dimension d is
    ``default_rng([seed, d])``.
    """

    def __init__(self, count: int, seed: int):
        self.count = count
        self.seed = seed
        self._cache: dict[int, np.ndarray] = {}

    def sq_partial(self, dim: int) -> np.ndarray:
        """Running sums of squared coordinates, shape (count, dim)."""
        if dim not in self._cache:
            g = np.random.default_rng([self.seed, dim]).standard_normal((self.count, dim))
            self._cache[dim] = np.cumsum(g * g, axis=1)
        return self._cache[dim]

    def set_probability(self, cloud_dim: int, set_dim: int) -> tuple[float, float]:
        """Estimate of mu^d_{cloud_dim}(A_{set_dim} x R^{cloud_dim - set_dim}).

        The test set is the permutation-invariant ball {y: |y|^2 < set_dim}
        in the first ``set_dim`` coordinates.
        """
        hits = self.sq_partial(cloud_dim)[:, set_dim - 1] < set_dim
        p = float(hits.mean())
        return p, sqrt(p * (1.0 - p) / self.count)


@dataclass(frozen=True)
class PairCheck:
    to_dim: int
    from_dim: int
    lhs: float
    rhs: float
    std_error: float
    passed: bool

    def to_dict(self):
        return dict(self.__dict__)


@dataclass(frozen=True)
class ConsistencyReport:
    l: int
    m: int
    n: int
    factor_lm: Fraction
    factor_mn: Fraction
    factor_ln: Fraction
    rational_ok: bool
    measure_checks: tuple[PairCheck, ...]

    @property
    def combined_factor(self) -> Fraction:
        return self.factor_lm * self.factor_mn

    @property
    def passed(self) -> bool:
        return self.rational_ok and all(c.passed for c in self.measure_checks)

    def to_dict(self):
        return {
            "chain": [self.l, self.m, self.n],
            "factor_lm": str(self.factor_lm),
            "factor_mn": str(self.factor_mn),
            "factor_ln": str(self.factor_ln),
            "combined_factor": str(self.combined_factor),
            "rational_ok": self.rational_ok,
            "measure_checks": [c.to_dict() for c in self.measure_checks],
            "passed": self.passed,
        }


def _pair_check(clouds: _CylinderClouds, to_dim: int, from_dim: int, n_sigma: float) -> PairCheck:
    g = restriction_map(from_dim, to_dim)
    p_to, se_to = clouds.set_probability(to_dim, to_dim)
    p_from, se_from = clouds.set_probability(from_dim, to_dim)
    # indistinguishable cylinder measure: mu_k = mu^d_k / k!
    inv_to = 1.0 / factorial(to_dim)
    inv_from = 1.0 / factorial(from_dim)
    lhs = float(g.factor) * inv_to * p_to
    rhs = inv_from * p_from
    if to_dim == from_dim:
        se = 0.0
    else:
        se = sqrt((float(g.factor) * inv_to * se_to) ** 2 + (inv_from * se_from) ** 2)
    passed = abs(lhs - rhs) <= n_sigma * se + 1e-15 * max(abs(lhs), abs(rhs))
    return PairCheck(to_dim, from_dim, lhs, rhs, se, passed)


def verify_projective_consistency(
    l: int, m: int, n: int, count: int = 20_000, seed: int = 0, *, n_sigma: float = 3.0,
    _clouds: _CylinderClouds | None = None,
) -> ConsistencyReport:
    """Check g_lm o g_mn = g_ln exactly and mu_m o g_mn = mu_n on a test set."""
    if not 1 <= l <= m <= n:
        raise DomainError(f"need 1 <= l <= m <= n, got ({l}, {m}, {n})")
    g_lm, g_mn, g_ln = restriction_map(m, l), restriction_map(n, m), restriction_map(n, l)
    rational_ok = g_lm.factor * g_mn.factor == g_ln.factor and compose(g_lm, g_mn).factor == g_ln.factor
    clouds = _clouds or _CylinderClouds(count, seed)
    checks = tuple(_pair_check(clouds, a, b, n_sigma) for a, b in ((l, m), (m, n), (l, n)))
    return ConsistencyReport(l, m, n, g_lm.factor, g_mn.factor, g_ln.factor, rational_ok, checks)


def verify_all_chains(n_max: int = 10, count: int = 20_000, seed: int = 0) -> list[ConsistencyReport]:
    """Every chain l <= m <= n <= n_max, sharing one sample cloud per dimension."""
    clouds = _CylinderClouds(count, seed)
    return [
        verify_projective_consistency(l, m, n, _clouds=clouds)
        for n in range(1, n_max + 1)
        for m in range(1, n + 1)
        for l in range(1, m + 1)
    ]
