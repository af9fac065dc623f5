import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from mepp_lab.config_space import build_basis
from mepp_lab.errors import DomainError, StepRejected
from mepp_lab.flow import (
    FlowParams,
    admissible_dt,
    dissipation,
    divergence_residual,
    energy,
    from_basis,
    make_state,
    physical_energy,
    random_solenoidal,
    read_coefficients,
    reality_residual,
    single_mode,
    step,
    taylor_green,
    trajectory,
    write_coefficients,
    zero_state,
)


def decay_error(dt, steps, nu=1.0, k=(0, 0, 2)):
    s0 = single_mode(16, k)
    p = FlowParams(nu, dt, dt * steps)
    s = s0
    for _ in range(steps):
        s = step(s, p)
    exact = s0.coefficients * np.exp(-nu * np.dot(k, k) * dt * steps)
    return np.abs(s.coefficients - exact).max() / np.abs(exact).max()


# -- params and states --------------------------------------------------------------

def test_params_validation():
    with pytest.raises(DomainError):
        FlowParams(np.ones(3), 0.1, 1.0)
    with pytest.raises(DomainError):
        FlowParams(-0.1, 0.1, 1.0)
    with pytest.raises(DomainError):
        FlowParams(0.1, 0.0, 1.0)
    with pytest.raises(DomainError):
        FlowParams(0.1, 0.1, 1.0, dealiasing="none")
    meta = FlowParams(0.1, 0.01, 1.0).metadata()
    assert meta["integrator"] == "rk4" and meta["dealiasing"] == "two-thirds" and meta["cfl_number"] == 0.5


def test_make_state_shape_check():
    with pytest.raises(DomainError):
        make_state(np.zeros((2, 4, 4, 4)))


def test_zero_state_fixed_point():
    z = zero_state(8)
    assert energy(z) == 0.0
    out = step(z, FlowParams(0.1, 0.01, 1.0))
    assert np.all(out.coefficients == 0)


def test_unit_basis_mode_energy():
    b = build_basis(16, 5)
    for i in range(5):
        c = np.zeros(5)
        c[i] = 1.0
        assert energy(from_basis(b, c)) == pytest.approx(0.5, rel=1e-12)


def test_parseval():
    s = random_solenoidal(16, 3, energy_target=0.8)
    assert energy(s) == pytest.approx(0.8, rel=1e-12)
    assert physical_energy(s) == pytest.approx(energy(s), rel=1e-10)


def test_dissipation_examples():
    b = build_basis(16, 1)
    s = from_basis(b, [1.0])
    assert dissipation(s, 0.0) == 0.0
    assert dissipation(s, 0.1) == pytest.approx(0.1, rel=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**20))
def test_invariants_after_steps(seed):
    s = random_solenoidal(12, seed)
    p = FlowParams(0.02, 0.01, 1.0)
    for _ in range(3):
        s = step(s, p)
        assert divergence_residual(s) <= 1e-12
        assert reality_residual(s) <= 1e-12


def test_taylor_green_projected_exactly():
    s = taylor_green(16)
    assert divergence_residual(s) <= 1e-14
    assert energy(s) == pytest.approx(np.pi**3, rel=1e-12)


# -- stepping --------------------------------------------------------------------------------

def test_single_mode_decay():
    assert decay_error(0.01, 100, nu=0.1, k=(0, 0, 1)) <= 1e-8
    assert decay_error(0.01, 100, nu=0.1, k=(1, 2, 0)) <= 1e-8


def test_rk4_order():
    errs = [decay_error(dt, round(0.5 / dt)) for dt in (0.05, 0.025, 0.0125)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 3.7)
    assert errs[0] / errs[1] == pytest.approx(16, rel=0.1)


def test_inviscid_energy_conserved():
    s = taylor_green(16)
    e0 = energy(s)
    p = FlowParams(0.0, 0.002, 1.0)
    for _ in range(200):
        s = step(s, p)
    assert abs(energy(s) - e0) / e0 <= 1e-10


def test_cfl_rejection():
    s = single_mode(16, amplitude=10.0)
    limit = admissible_dt(s)
    with pytest.raises(StepRejected) as info:
        step(s, FlowParams(0.0, 2 * limit, 1.0))
    assert info.value.admissible_dt == pytest.approx(limit)
    step(s, FlowParams(0.0, 0.99 * limit, 1.0))


# -- trajectories ---------------------------------------------------------------------------------

def test_trajectory_energy_budget():
    s = random_solenoidal(16, 0)
    p = FlowParams(0.05, 0.01, 1.0)
    times = np.linspace(0, 1, 101)
    tr = trajectory(s, p, times)
    lost = integrate.simpson(np.array(tr.dissipations), x=np.array(tr.times))
    assert abs(tr.energies[-1] - tr.energies[0] + lost) <= 1e-6 * tr.energies[0]


def test_viscous_energy_nonincreasing():
    tr = trajectory(random_solenoidal(16, 1), FlowParams(0.05, 0.01, 0.5), np.linspace(0, 0.5, 6))
    assert all(b < a for a, b in zip(tr.energies, tr.energies[1:]))
    assert [s.radius for s in tr.surfaces] == pytest.approx([np.sqrt(2 * e) for e in tr.energies])


def test_inviscid_trajectory_flat():
    tr = trajectory(taylor_green(16), FlowParams(0.0, 0.005, 0.2), [0.0, 0.1, 0.2])
    assert np.ptp(tr.energies) <= 1e-10 * tr.energies[0]


def test_trajectory_hits_times_exactly():
    tr = trajectory(random_solenoidal(8, 0), FlowParams(0.01, 0.03, 1.0), [0.0, 0.1, 0.37, 1.0])
    assert tr.times == (0.0, 0.1, 0.37, 1.0)
    assert [s.time for s in tr.states] == [0.0, 0.1, 0.37, 1.0]
    assert tr.metadata["cylinder_dim"] == 3


def test_empty_trajectory():
    tr = trajectory(random_solenoidal(8, 0), FlowParams(0.01, 0.03, 1.0), [])
    assert len(tr) == 0


def test_trajectory_time_validation():
    with pytest.raises(DomainError):
        trajectory(random_solenoidal(8, 0), FlowParams(0.01, 0.03, 1.0), [0.0, 2.0])
    with pytest.raises(DomainError):
        trajectory(random_solenoidal(8, 0), FlowParams(0.01, 0.03, 1.0), [0.5, 0.2])


def test_random_solenoidal_deterministic():
    a, b = random_solenoidal(8, 5), random_solenoidal(8, 5)
    assert np.array_equal(a.coefficients, b.coefficients)


def test_coefficient_csv_roundtrip(tmp_path):
    s = random_solenoidal(8, 2)
    s = type(s)(s.coefficients, s.grid_size, 0.25)
    p = tmp_path / "c.csv"
    write_coefficients(s, p)
    back = read_coefficients(p)
    assert back.grid_size == 8 and back.time == 0.25
    assert np.allclose(back.coefficients, s.coefficients, atol=1e-15)
