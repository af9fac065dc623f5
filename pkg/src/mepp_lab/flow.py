"""Pseudo-spectral incompressible Navier-Stokes / Euler solver on the periodic cube [0, 2pi)^3.

State coefficients are scaled Fourier amplitudes ``sqrt(|V|) * fftn(u) / N^3``,
so that the kinetic energy is ``0.5 * sum |c|^2`` (Parseval) and a unit
coefficient on an orthonormal real mode carries energy 1/2.

Time stepping is classical RK4 on

    dc/dt = P[ (u x omega)^ ] - nu |k|^2 c

with P the Leray projection and the product dealiased by the 2/3 rule.
The rotational form differs from -(u.grad)u by a gradient, which P removes.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache
from math import ceil, sqrt
from pathlib import Path
from typing import Sequence

import numpy as np

from .config_space import BOX_LENGTH, BOX_VOLUME, BasisSpec, EnergySurface, make_surface, transverse_pair
from .errors import DomainError, StepRejected

CFL_NUMBER = 0.5
DEALIASING = "two-thirds"


@dataclass(frozen=True)
class FlowParams:
    nu: float
    dt: float
    t_end: float
    dealiasing: str = DEALIASING

    def __post_init__(self):
        if not np.isscalar(self.nu):
            raise DomainError("viscosity must be a constant scalar; spatially varying nu is not supported")
        if self.nu < 0:
            raise DomainError("viscosity must be nonnegative")
        if not self.dt > 0 or not self.t_end > 0:
            raise DomainError("dt and t_end must be positive")
        if self.dealiasing != DEALIASING:
            raise DomainError(f"only {DEALIASING!r} dealiasing is implemented")

    def metadata(self) -> dict:
        return {"nu": self.nu, "dt": self.dt, "t_end": self.t_end, "dealiasing": self.dealiasing,
                "integrator": "rk4", "cfl_number": CFL_NUMBER}


@dataclass(frozen=True, eq=False)
class SpectralState:
    coefficients: np.ndarray
    grid_size: int
    time: float = 0.0

    def velocity(self) -> np.ndarray:
        return to_physical(self.coefficients, self.grid_size)


@lru_cache(maxsize=8)
def _wavenumbers(n: int):
    k1 = np.fft.fftfreq(n, 1.0 / n)
    K = np.stack(np.meshgrid(k1, k1, k1, indexing="ij"))
    K2 = np.sum(K * K, axis=0)
    K_over_K2 = K / np.where(K2 == 0, 1.0, K2)
    # 2/3 rule: keep |k_i| < N/3 in every direction
    mask = np.all(np.abs(K) < n / 3.0, axis=0)
    for a in (K, K2, K_over_K2, mask):
        a.setflags(write=False)
    return K, K2, K_over_K2, mask


def _scale(n: int) -> float:
    return sqrt(BOX_VOLUME) / n**3


def to_spectral(u: np.ndarray) -> np.ndarray:
    n = u.shape[-1]
    return _scale(n) * np.fft.fftn(u, axes=(1, 2, 3))


def to_physical(c: np.ndarray, n: int) -> np.ndarray:
    return np.fft.ifftn(c / _scale(n), axes=(1, 2, 3)).real


def _reflect(c: np.ndarray) -> np.ndarray:
    """c(-k) on the FFT index grid."""
    return np.roll(np.flip(c, axis=(1, 2, 3)), 1, axis=(1, 2, 3))


def _enforce_reality(c: np.ndarray) -> np.ndarray:
    return 0.5 * (c + np.conj(_reflect(c)))


def leray_project(c: np.ndarray) -> np.ndarray:
    K, _, K_over_K2, _ = _wavenumbers(c.shape[-1])
    return c - K_over_K2 * np.sum(K * c, axis=0)[None]


def make_state(velocity: np.ndarray, time: float = 0.0, dealias: bool = True) -> SpectralState:
    """Project a grid velocity field (3, N, N, N) onto the divergence-free, dealiased subspace."""
    u = np.asarray(velocity, dtype=float)
    if u.ndim != 4 or u.shape[0] != 3 or len(set(u.shape[1:])) != 1:
        raise DomainError("velocity must have shape (3, N, N, N)")
    n = u.shape[-1]
    c = leray_project(to_spectral(u))
    if dealias:
        c = c * _wavenumbers(n)[3][None]
    return SpectralState(_enforce_reality(c), n, float(time))


def zero_state(grid_size: int) -> SpectralState:
    return SpectralState(np.zeros((3,) + (grid_size,) * 3, dtype=complex), grid_size, 0.0)


def energy(state: SpectralState) -> float:
    return 0.5 * float(np.sum(np.abs(state.coefficients) ** 2))


def physical_energy(state: SpectralState) -> float:
    """Grid quadrature of int_V |u|^2 / 2."""
    u = state.velocity()
    return 0.5 * float(np.sum(u * u)) * BOX_VOLUME / state.grid_size**3


def dissipation(state: SpectralState, nu: float) -> float:
    """nu * sum |k|^2 |c|^2 = -dE/dt for the viscous term."""
    K2 = _wavenumbers(state.grid_size)[1]
    return float(nu * np.sum(K2[None] * np.abs(state.coefficients) ** 2))


def divergence_residual(state: SpectralState) -> float:
    """max |k . c(k)| / max |c|."""
    K = _wavenumbers(state.grid_size)[0]
    c = state.coefficients
    top = float(np.max(np.abs(c))) or 1.0
    return float(np.max(np.abs(np.sum(K * c, axis=0)))) / top


def reality_residual(state: SpectralState) -> float:
    c = state.coefficients
    top = float(np.max(np.abs(c))) or 1.0
    return float(np.max(np.abs(c - np.conj(_reflect(c))))) / top


def admissible_dt(state: SpectralState) -> float:
    umax = float(np.max(np.abs(state.velocity())))
    if umax == 0.0:
        return float("inf")
    return CFL_NUMBER * (BOX_LENGTH / state.grid_size) / umax


def _rhs(c: np.ndarray, nu: float) -> np.ndarray:
    n = c.shape[-1]
    K, K2, K_over_K2, mask = _wavenumbers(n)
    u = to_physical(c, n)
    omega = to_physical(1j * np.cross(K, c, axis=0), n)
    nonlinear = mask[None] * to_spectral(np.cross(u, omega, axis=0))
    nonlinear -= K_over_K2 * np.sum(K * nonlinear, axis=0)[None]
    return nonlinear - nu * K2[None] * c


def step(state: SpectralState, params: FlowParams, dt: float | None = None) -> SpectralState:
    """One RK4 step; raises StepRejected when dt exceeds the CFL bound."""
    h = params.dt if dt is None else dt
    limit = admissible_dt(state)
    if h > limit:
        raise StepRejected(h, limit)
    c, nu = state.coefficients, params.nu
    k1 = _rhs(c, nu)
    k2 = _rhs(c + 0.5 * h * k1, nu)
    k3 = _rhs(c + 0.5 * h * k2, nu)
    k4 = _rhs(c + h * k3, nu)
    new = c + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return SpectralState(_enforce_reality(new), state.grid_size, state.time + h)


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: tuple[float, ...]
    energies: tuple[float, ...]
    dissipations: tuple[float, ...]
    surfaces: tuple[EnergySurface, ...]
    dim: int
    states: tuple[SpectralState, ...] = ()
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    def rows(self):
        return [{"time": t, "energy": e, "dissipation": d}
                for t, e, d in zip(self.times, self.energies, self.dissipations)]


def trajectory(
    initial: SpectralState,
    params: FlowParams,
    sample_times: Sequence[float],
    dim: int = 3,
    keep_states: bool = True,
) -> Trajectory:
    """Integrate from ``initial`` and record states, energies and energy surfaces.

    Steps between consecutive samples are shortened uniformly so that every
    sample time is hit exactly; no step exceeds ``params.dt``.
    """
    times = [float(t) for t in sample_times]
    meta = {**params.metadata(), "grid_size": initial.grid_size, "cylinder_dim": dim}
    if not times:
        return Trajectory((), (), (), (), dim, (), meta)
    if any(b < a for a, b in zip(times, times[1:])):
        raise DomainError("sample_times must be nondecreasing")
    if times[0] < initial.time or times[-1] > params.t_end + 1e-12:
        raise DomainError(f"sample_times must lie in [{initial.time}, {params.t_end}]")
    state = initial
    states, energies, diss, surfaces = [], [], [], []
    for ts in times:
        gap = ts - state.time
        if gap > 0:
            nsub = max(1, ceil(gap / params.dt - 1e-9))
            h = gap / nsub
            for _ in range(nsub):
                state = step(state, params, h)
            state = SpectralState(state.coefficients, state.grid_size, ts)
        e = energy(state)
        energies.append(e)
        diss.append(dissipation(state, params.nu))
        surfaces.append(make_surface(dim, e))
        if keep_states:
            states.append(state)
    return Trajectory(tuple(times), tuple(energies), tuple(diss), tuple(surfaces), dim, tuple(states), meta)


# -- initial conditions --------------------------------------------------------

def _grid(n: int) -> np.ndarray:
    x = np.arange(n) * (BOX_LENGTH / n)
    return np.stack(np.meshgrid(x, x, x, indexing="ij"))


def single_mode(grid_size: int, wavevector=(0, 0, 1), amplitude: float = 1.0, direction=None) -> SpectralState:
    """Shear mode u = A sin(k.x) e with e transverse to k (default: first transverse axis)."""
    k = np.asarray(wavevector, dtype=float)
    if direction is None:
        direction = transverse_pair(tuple(int(v) for v in wavevector))[0]
    e = np.asarray(direction, dtype=float)
    e = e / np.linalg.norm(e)
    if abs(float(k @ e)) > 1e-12:
        raise DomainError("direction must be orthogonal to the wavevector")
    X = _grid(grid_size)
    phase = np.tensordot(k, X, axes=1)
    return make_state(amplitude * np.sin(phase)[None] * e[:, None, None, None])


def taylor_green(grid_size: int, amplitude: float = 1.0) -> SpectralState:
    X = _grid(grid_size)
    x, y, z = X
    u = amplitude * np.stack([
        np.sin(x) * np.cos(y) * np.cos(z),
        -np.cos(x) * np.sin(y) * np.cos(z),
        np.zeros_like(x),
    ])
    return make_state(u)


def random_solenoidal(grid_size: int, seed: int, k_max: float = 3.0, energy_target: float = 0.5) -> SpectralState:
    """Random band-limited divergence-free field with |k| <= k_max, rescaled to the given energy."""
    rng = np.random.default_rng(seed)
    K2 = _wavenumbers(grid_size)[1]
    c = rng.standard_normal((3,) + K2.shape) + 1j * rng.standard_normal((3,) + K2.shape)
    c *= ((K2 > 0) & (K2 <= k_max**2))[None]
    u = to_physical(c, grid_size)
    state = make_state(u)
    e = energy(state)
    if e == 0:
        raise DomainError("k_max admits no modes")
    return SpectralState(state.coefficients * sqrt(energy_target / e), grid_size, 0.0)


def from_basis(basis: BasisSpec, coefficients, grid_size: int | None = None) -> SpectralState:
    """State whose velocity is sum_i c_i b_i for the real orthonormal basis."""
    n = grid_size or basis.grid_size
    if n != basis.grid_size:
        raise DomainError("grid_size must match the basis grid")
    return make_state(basis.synthesize(coefficients))


# -- coefficient CSV -----------------------------------------------------------

COEFF_COLUMNS = ("kx", "ky", "kz", "component", "re", "im")


def write_coefficients(state: SpectralState, path: str | Path, tol: float = 0.0) -> None:
    K = _wavenumbers(state.grid_size)[0].astype(int)
    c = state.coefficients
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["# grid_size", state.grid_size, "time", repr(state.time)])
        w.writerow(COEFF_COLUMNS)
        for idx in zip(*np.nonzero(np.abs(c) > tol)):
            comp, i, j, l = (int(v) for v in idx)
            v = c[comp, i, j, l]
            w.writerow([K[0, i, j, l], K[1, i, j, l], K[2, i, j, l], comp, repr(float(v.real)), repr(float(v.imag))])


def read_coefficients(path: str | Path, grid_size: int | None = None) -> SpectralState:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    time = 0.0
    if rows and rows[0] and rows[0][0].startswith("#"):
        head = rows.pop(0)
        grid_size = grid_size or int(head[1])
        if len(head) >= 4:
            time = float(head[3])
    if grid_size is None:
        raise DomainError("grid_size missing from coefficient file and arguments")
    if rows and rows[0] and rows[0][0] == "kx":
        rows.pop(0)
    n = grid_size
    c = np.zeros((3, n, n, n), dtype=complex)
    for r in rows:
        if not r:
            continue
        kx, ky, kz, comp = (int(v) for v in r[:4])
        c[comp, kx % n, ky % n, kz % n] = complex(float(r[4]), float(r[5]))
    # re-project so that hand-written files still satisfy the state invariants
    c = _enforce_reality(leray_project(c))
    return SpectralState(c, n, time)
