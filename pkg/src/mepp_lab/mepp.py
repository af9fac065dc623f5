"""Verification suites and the maximum-entropy-production selector.

Competitors are measure families evaluated over one common trajectory, not
alternative weak solutions of the flow equations.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import sqrt
from typing import Callable, Sequence

import mpmath
import numpy as np

from .config_space import EnergySurface, verify_all_chains
from .entropy import (
    UNIFORM_SAMPLING,
    EntropyEstimate,
    ProductionSeries,
    entropy,
    production_rate,
    uniform_entropy,
)
from .errors import DEGENERATE, ConfigError, DomainError
from .flow import Trajectory
from .measures import (
    CandidateMeasure,
    PolynomialTilt,
    Uniform,
    VonMisesFisher,
    load_tabulated_csv,
    mixture_measure,
    normalize,
    physical_measure,
    random_tabulated,
    symmetrize,
    tabulated_measure,
    tilt_measure,
    vmf_measure,
)
from .restriction import (
    TEST_FUNCTIONALS,
    named_functional,
    restriction_agrees,
    surface_integral_oracle,
    surface_restrict,
)

N_SIGMA = 3.0
# floor for comparisons of closed-form values against zero-variance estimates
FLOAT_RTOL = 1e-12

SCOPE_NOTE = (
    "competitors are candidate measure families on the energy surfaces of one "
    "common trajectory; alternative weak solutions are not constructed"
)


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    expected: float
    std_error: float
    passed: bool
    detail: dict = field(default_factory=dict)

    def to_dict(self):
        return {"name": self.name, "value": self.value, "expected": self.expected,
                "std_error": self.std_error, "passed": self.passed, **self.detail}


@dataclass(frozen=True)
class SuiteReport:
    name: str
    checks: tuple[Check, ...]
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self):
        return {"suite": self.name, "passed": self.passed,
                "checks": [c.to_dict() for c in self.checks], **self.extra}


def _within(value: float, expected: float, se: float, n_sigma: float = N_SIGMA) -> bool:
    return abs(value - expected) <= n_sigma * se + FLOAT_RTOL * max(1.0, abs(expected))


# -- candidate families ---------------------------------------------------------

@dataclass(frozen=True)
class CandidateFamily:
    name: str
    builder: Callable[[EnergySurface], CandidateMeasure]
    is_physical: bool = False
    spec: dict = field(default_factory=dict)

    def build(self, surface: EnergySurface) -> CandidateMeasure:
        m = self.builder(surface)
        if m is DEGENERATE:
            return m
        return m if m.is_probability else normalize(m)


def _direction(spec, dim: int) -> np.ndarray:
    if spec in (None, "first-axis"):
        d = np.zeros(dim)
        d[0] = 1.0
        return d
    if spec == "diagonal":
        return np.ones(dim)
    d = np.asarray(spec, dtype=float)
    if d.shape != (dim,):
        raise ConfigError(f"direction has length {d.size}, surface dimension is {dim}")
    return d


def _density_from_spec(spec: dict, dim: int):
    kind = spec["family"]
    if kind == "uniform":
        return Uniform()
    if kind == "vmf":
        return VonMisesFisher(tuple(_direction(spec.get("direction"), dim)), float(spec["kappa"]))
    if kind == "tilt":
        return PolynomialTilt(int(spec.get("index", 0)), float(spec["slope"]))
    raise ConfigError(f"family {kind!r} cannot be a mixture component")


def family_from_spec(spec: dict) -> CandidateFamily:
    """Build a family from a config entry such as ``{"family": "vmf", "kappa": 2}``."""
    spec = dict(spec)
    kind = spec.get("family")
    name = spec.get("name") or kind
    indist = bool(spec.get("indistinguishable", False))

    def finish(m: CandidateMeasure) -> CandidateMeasure:
        if m is DEGENERATE:
            return m
        return normalize(symmetrize(m)) if indist else m

    if kind == "uniform":
        def build(s):
            return physical_measure(s, indist)
        return CandidateFamily(name, build, bool(spec.get("physical", True)), spec)
    if kind == "vmf":
        kappa = float(spec["kappa"])

        def build(s):
            return finish(vmf_measure(s, _direction(spec.get("direction"), s.dim), kappa))
    elif kind == "tilt":
        def build(s):
            return finish(tilt_measure(s, int(spec.get("index", 0)), float(spec["slope"])))
    elif kind == "mixture":
        comps = spec["components"]
        weights = [float(w) for w in spec.get("weights", [1.0] * len(comps))]

        def build(s):
            return finish(mixture_measure(s, weights, [_density_from_spec(c, s.dim) for c in comps]))
    elif kind == "tabulated":
        table = load_tabulated_csv(spec["path"]) if "path" in spec else None
        table_seed = int(spec.get("table_seed", 0))

        def build(s):
            t = table if table is not None else random_tabulated(np.random.default_rng(table_seed), s.dim)
            if t.table_directions.shape[1] != s.dim:
                raise ConfigError(f"tabulated density has dimension {t.table_directions.shape[1]}, surface {s.dim}")
            return finish(tabulated_measure(s, t, seed=table_seed))
    else:
        raise ConfigError(f"unknown candidate family {kind!r}")
    return CandidateFamily(name, build, bool(spec.get("physical", False)), spec)


def physical_family(indistinguishable: bool = False) -> CandidateFamily:
    return family_from_spec({"family": "uniform", "name": "uniform", "indistinguishable": indistinguishable})


def random_family_spec(rng: np.random.Generator, dim: int, kind: str | None = None) -> dict:
    """Random competitor with parameters away from the uniform limit."""
    kinds = ("vmf", "tilt", "mixture", "tabulated")
    kind = kind or kinds[int(rng.integers(len(kinds)))]
    direction = [float(v) for v in rng.standard_normal(dim)]
    if kind == "vmf":
        return {"family": "vmf", "kappa": float(rng.uniform(0.5, 6.0)), "direction": direction}
    if kind == "tilt":
        slope = float(rng.uniform(0.3, 2.5)) * (1 if rng.random() < 0.5 else -1)
        return {"family": "tilt", "index": int(rng.integers(dim)), "slope": slope}
    if kind == "mixture":
        comps = [
            {"family": "vmf", "kappa": float(rng.uniform(1.0, 6.0)), "direction": [float(v) for v in rng.standard_normal(dim)]}
            for _ in range(2)
        ]
        return {"family": "mixture", "weights": [float(w) for w in rng.uniform(0.2, 1.0, 2)], "components": comps}
    return {"family": "tabulated", "table_seed": int(rng.integers(2**31))}


# -- suites -------------------------------------------------------------------------

def verify_prop1(n_max: int = 10, count: int = 20_000, seed: int = 0) -> SuiteReport:
    reports = verify_all_chains(n_max, count, seed)
    checks = []
    for r in reports:
        worst = max(r.measure_checks, key=lambda c: abs(c.lhs - c.rhs) / (c.std_error or 1.0))
        checks.append(Check(
            f"chain{(r.l, r.m, r.n)}", float(r.combined_factor), float(r.factor_ln), worst.std_error,
            r.passed, {"exact_factor": str(r.combined_factor), "rational_ok": r.rational_ok,
                       "measure_checks": [c.to_dict() for c in r.measure_checks]},
        ))
    return SuiteReport("prop1-projective-consistency", tuple(checks), {"n_max": n_max, "count": count, "seed": seed})


def verify_prop2(dims: Sequence[int] = (1, 2, 3, 5, 6), energy: float = 0.5, count: int = 200_000,
                 seed: int = 0, functionals: Sequence[str] = TEST_FUNCTIONALS) -> SuiteReport:
    """Radial derivative of ball integrals vs direct surface integrals."""
    r = sqrt(2.0 * energy)
    checks = []
    for n in dims:
        for name in functionals:
            f = named_functional(name, r)
            d = surface_restrict(f, n, energy, count, seed)
            o = surface_integral_oracle(f, n, energy, count, seed + 1)
            checks.append(Check(f"{name}@n={n}", d.value, o.value,
                                sqrt(d.std_error**2 + o.std_error**2), restriction_agrees(d, o),
                                {"fd_error": d.fd_error, "step": d.step}))
    return SuiteReport("prop2-energy-surface-restriction", tuple(checks),
                       {"energy": energy, "count": count, "seed": seed})


def verify_prop3(surface: EnergySurface, count: int, seed: int, estimator: str = UNIFORM_SAMPLING,
                 threads: int = 1) -> SuiteReport:
    """Monte Carlo entropy of the physical measure against log(reference mass)."""
    if surface.degenerate:
        raise DomainError("prop 3 needs a nondegenerate surface")
    checks = []
    for indist in (False, True):
        est = entropy(physical_measure(surface, indist), count, seed, estimator, threads)
        closed = uniform_entropy(surface, indist).value
        label = "indistinguishable" if indist else "distinguishable"
        checks.append(Check(f"{label}@n={surface.dim}", est.value, closed, est.std_error,
                            _within(est.value, closed, est.std_error), {"estimator": est.estimator}))
    return SuiteReport("prop3-physical-entropy", tuple(checks),
                       {"dim": surface.dim, "energy": surface.energy, "count": count, "seed": seed})


def verify_prop4(families: Sequence[CandidateFamily], surface: EnergySurface, count: int, seed: int,
                 estimator: str = UNIFORM_SAMPLING, threads: int = 1) -> SuiteReport:
    """Every candidate's entropy stays below the physical entropy (Jensen), up to 3 SE."""
    if not families:
        raise ConfigError("verify_prop4 needs at least one family")
    if surface.degenerate:
        raise DomainError("prop 4 needs a nondegenerate surface")
    checks = []
    for fam in families:
        m = fam.build(surface)
        est = entropy(m, count, seed, estimator, threads)
        top = uniform_entropy(surface, m.indistinguishable).value
        gap = top - est.value
        ok = est.value <= top + N_SIGMA * est.std_error + FLOAT_RTOL * max(1.0, abs(top))
        checks.append(Check(fam.name, est.value, top, est.std_error, ok,
                            {"gap": gap, "gap_in_se": gap / est.std_error if est.std_error > 0 else None,
                             "estimator": est.estimator, "invariance": m.invariance}))
    return SuiteReport("prop4-jensen-dominance", tuple(checks),
                       {"dim": surface.dim, "energy": surface.energy, "count": count, "seed": seed})


def _to_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(str(x))


def verify_prop5(box_measure, n_max: int, digits: int = 50) -> SuiteReport:
    """Partial sums of b^n / n! against e^b in exact rational / high-precision arithmetic."""
    if n_max < 1:
        raise DomainError("n_max must be >= 1")
    b = _to_fraction(box_measure)
    if b < 0:
        raise DomainError("box measure must be nonnegative")
    with mpmath.workdps(digits):
        bound = mpmath.exp(mpmath.mpf(b.numerator) / b.denominator)
        partial = Fraction(0)
        term = Fraction(1)
        sums = []
        for n in range(n_max + 1):
            if n > 0:
                term = term * b / n
            partial += term
            sums.append(partial)
        mp_sums = [mpmath.mpf(s.numerator) / s.denominator for s in sums]
        below = all(s <= bound for s in mp_sums)
        diffs = [y - x for x, y in zip(sums, sums[1:])]
        monotone = all(d >= 0 for d in diffs)
        strict = all(d > 0 for d in diffs) if b > 0 else True
        log_ok = all(mpmath.log(s) <= mpmath.mpf(b.numerator) / b.denominator for s in mp_sums)
        gap = bound - mp_sums[-1]
        checks = (
            Check("partial_sums_below_exp", float(mp_sums[-1]), float(bound), 0.0, below),
            Check("partial_sums_monotone", float(mp_sums[-1]), float(bound), 0.0, monotone and strict),
            Check("log_partial_sums_below_box", float(mpmath.log(mp_sums[-1])), float(b), 0.0, log_ok),
        )
        extra = {
            "box_measure": str(b),
            "n_max": n_max,
            "final_partial_sum": mpmath.nstr(mp_sums[-1], 30),
            "exp_box": mpmath.nstr(bound, 30),
            "final_gap": float(gap),
            "partial_sums": [mpmath.nstr(s, 20) for s in mp_sums],
        }
    return SuiteReport("prop5-series-bound", checks, extra)


# -- selector -------------------------------------------------------------------------

@dataclass(frozen=True)
class SelectionReport:
    families: tuple[str, ...]
    physical: str
    series: dict[str, ProductionSeries]
    winner: str | None
    outcome: str  # "pass" | "fail" | "inconclusive"
    margins: dict[str, list[dict]]
    strict_dominance: dict[str, list[str]]
    time_averaged_entropy: dict[str, float]
    mean_rate: dict[str, float]
    invariance: dict[str, str]
    count: int
    seed: int
    estimator: str

    @property
    def verdict(self) -> str:
        return self.outcome

    def to_dict(self):
        return {
            "families": list(self.families),
            "physical": self.physical,
            "winner": self.winner,
            "verdict": self.outcome,
            "series": {k: v.to_dict() for k, v in self.series.items()},
            "margins": self.margins,
            "strict_dominance": self.strict_dominance,
            "time_averaged_entropy": self.time_averaged_entropy,
            "mean_rate": self.mean_rate,
            "invariance": self.invariance,
            "count": self.count,
            "seed": self.seed,
            "estimator": self.estimator,
            "scope": SCOPE_NOTE,
        }


def _combined(a: EntropyEstimate, b: EntropyEstimate) -> float:
    return sqrt(a.std_error**2 + b.std_error**2)


def _never_below(a: ProductionSeries, b: ProductionSeries) -> bool:
    return all(x.value >= y.value - N_SIGMA * _combined(x, y) - FLOAT_RTOL * max(1.0, abs(y.value))
               for x, y in zip(a.entropies, b.entropies))


def _somewhere_above(a: ProductionSeries, b: ProductionSeries) -> bool:
    return any(x.value > y.value + N_SIGMA * _combined(x, y) + FLOAT_RTOL * max(1.0, abs(y.value))
               for x, y in zip(a.entropies, b.entropies))


def strictly_dominates(a: ProductionSeries, b: ProductionSeries) -> bool:
    """a is never significantly below b and significantly above b at some time."""
    return _never_below(a, b) and _somewhere_above(a, b)


def select(families: Sequence[CandidateFamily], trajectory: Trajectory, count: int, seed: int,
           estimator: str = UNIFORM_SAMPLING, threads: int = 1) -> SelectionReport:
    """Rank families by pointwise entropy dominance over the trajectory's energy surfaces.

    All families share ``seed`` at every time. Outcomes: ``pass`` when the
    physical family strictly dominates every competitor, ``fail`` when some
    competitor strictly dominates the physical family, ``inconclusive``
    otherwise.
    """
    if len(families) < 2:
        raise ConfigError("selection needs the physical family and at least one competitor")
    names = [f.name for f in families]
    if len(set(names)) != len(names):
        raise ConfigError(f"family names must be unique: {names}")
    physical = [f for f in families if f.is_physical]
    if not physical:
        raise ConfigError("no physical family among the candidates")
    if len(physical) > 1:
        raise ConfigError("exactly one family may be marked physical")
    if len(trajectory) < 3:
        raise ConfigError("selection needs a trajectory with at least 3 sample times")
    phys = physical[0].name

    series: dict[str, ProductionSeries] = {}
    invariance: dict[str, str] = {}
    for fam in families:
        measures = [fam.build(s) for s in trajectory.surfaces]
        if any(m is DEGENERATE for m in measures):
            raise DomainError("trajectory reached a zero-energy (degenerate) surface")
        invariance[fam.name] = measures[0].invariance
        series[fam.name] = production_rate(list(zip(trajectory.times, measures)), count, seed, estimator, threads)

    dominated_by = {n: [m for m in names if m != n and strictly_dominates(series[m], series[n])] for n in names}
    strict = {n: [m for m in names if m != n and strictly_dominates(series[n], series[m])] for n in names}
    winner = next((n for n in names if len(strict[n]) == len(names) - 1), None)
    if winner == phys:
        outcome = "pass"
    elif dominated_by[phys]:
        outcome = "fail"
    else:
        outcome = "inconclusive"

    ref = series[phys]
    margins = {
        n: [
            {"time": t, "gap": p.value - e.value, "std_error": _combined(p, e)}
            for t, p, e in zip(ref.times, ref.entropies, series[n].entropies)
        ]
        for n in names if n != phys
    }
    avg = {n: float(np.mean([e.value for e in series[n].entropies])) for n in names}
    rate = {n: float(np.mean(series[n].rates)) for n in names}
    return SelectionReport(tuple(names), phys, series, winner, outcome, margins,
                           {n: strict[n] for n in names}, avg, rate, invariance, count, seed, estimator)


def default_competitors() -> list[CandidateFamily]:
    return [
        family_from_spec({"family": "vmf", "name": "vmf-k2", "kappa": 2.0}),
        family_from_spec({"family": "tilt", "name": "tilt-0.8", "index": 0, "slope": 0.8}),
        family_from_spec({"family": "mixture", "name": "vmf-mixture", "weights": [0.5, 0.5],
                          "components": [{"family": "vmf", "kappa": 3.0},
                                         {"family": "vmf", "kappa": 3.0, "direction": "diagonal"}]}),
    ]
