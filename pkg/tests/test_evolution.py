import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import linalg as sla

from bundlerqm.evolution import (OnDemandEvolution, Propagator, SingularStepError, StepFactory,
                                 Trajectory, phase_advance, propagate, propagator_matrix,
                                 schrodinger_residual, step)
from bundlerqm.harness import (gaussian_packet, harmonic_exact, harmonic_hamiltonian,
                               random_hermitian, random_state)
from bundlerqm.models import dirac_hamiltonian, kg_feshbach_villars
from bundlerqm.reduction import Hamiltonian


def test_zero_hamiltonian_step_is_bitwise_identity(rng):
    H = Hamiltonian.constant(np.zeros((5, 5)))
    psi = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    assert np.array_equal(step(H, psi, 0.0, 0.1), psi)


@given(st.integers(0, 2**31), st.floats(1e-3, 1.0))
def test_cn_step_preserves_norm(seed, dt):
    H = Hamiltonian.constant(random_hermitian(8, seed))
    psi = random_state(8, seed + 1)
    out = step(H, psi, 0.0, dt)
    assert abs(np.linalg.norm(out) - 1.0) <= 1e-14


def test_cn_local_error_is_third_order():
    H = harmonic_hamiltonian(1.0)
    psi = np.array([1.0, 0.0], dtype=complex)
    errs = []
    for dt in (0.1, 0.05):
        exact = sla.expm(-1j * dt * H.matrix(0.0)) @ psi
        errs.append(np.linalg.norm(step(H, psi, 0.0, dt) - exact))
    assert 7.5 <= errs[0] / errs[1] <= 8.5


def test_step_rejects_bad_dt_and_method():
    H = harmonic_hamiltonian()
    with pytest.raises(ValueError):
        step(H, np.ones(2), 0.0, 0.0)
    with pytest.raises(ValueError):
        step(H, np.ones(2), 0.0, 0.1, "rk4")


def test_singular_step_is_reported():
    # 1 + i dt H / 2 = 0 for H = 2i/dt
    dt = 0.5
    H = Hamiltonian.constant(np.array([[2j / dt]]))
    with pytest.raises(SingularStepError):
        step(H, np.ones(1), 0.0, dt)


def test_single_step_propagation_matches_step(rng):
    H = Hamiltonian.constant(random_hermitian(6, 3))
    psi = random_state(6, 4)
    traj = propagate(H, psi, 0.0, 0.2, 1)
    assert np.array_equal(traj.final, step(H, psi, 0.0, 0.2))


def test_dirac_packet_norm(grid64, params):
    H = dirac_hamiltonian(grid64, params)
    psi = gaussian_packet(grid64, 4, width=0.6, momentum=1.0)
    traj = propagate(H, psi, 0.0, 1.0, 1000, keep_every=1000)
    assert np.max(np.abs(traj.diagnostics["norm"] - 1.0)) <= 1e-12


def test_harmonic_period_return():
    omega = 2.0
    H = harmonic_hamiltonian(omega)
    period = 2 * math.pi / omega
    n = 500
    psi0 = np.array([1.0, 0.3], dtype=complex)
    out = propagate(H, psi0, 0.0, period, n, keep_every=n).final
    dt = period / n
    assert np.linalg.norm(out - psi0) / np.linalg.norm(psi0) <= (omega * dt) ** 2 * math.pi


def test_propagator_identity_and_harmonic():
    H = harmonic_hamiltonian(1.0)
    assert np.array_equal(propagator_matrix(H, 0.3, 0.3, 10), np.eye(2))
    u = propagator_matrix(H, 2 * math.pi, 0.0, 1000 * 1)
    # 1e3 steps per period
    assert np.abs(u - harmonic_exact(1.0, 2 * math.pi)).max() <= 1e-4
    u = propagator_matrix(H, 1.0, 0.0, 160)
    assert np.abs(u - harmonic_exact(1.0, 1.0)).max() <= 1e-5


def test_propagator_harmonic_1e3_steps_per_period():
    omega = 1.0
    H = harmonic_hamiltonian(omega)
    t = 0.25 * 2 * math.pi
    u = propagator_matrix(H, t, 0.0, 250)
    assert np.abs(u - harmonic_exact(omega, t)).max() <= 1e-5


@given(st.integers(0, 2**31))
def test_composition_commensurate(seed):
    H = Hamiltonian.constant(random_hermitian(8, seed))
    u31 = propagator_matrix(H, 1.0, 0.0, 100)
    u32 = propagator_matrix(H, 1.0, 0.3, 70)
    u21 = propagator_matrix(H, 0.3, 0.0, 30)
    assert np.linalg.norm(u31 - u32 @ u21, 2) <= 1e-10


def test_propagator_concatenation_and_backward():
    H = Hamiltonian.constant(random_hermitian(4, 1))
    a = Propagator.uniform(H, 0.0, 0.5, 5)
    b = Propagator.uniform(H, 0.5, 1.0, 5)
    ab = a.then(b)
    whole = Propagator.uniform(H, 0.0, 1.0, 10)
    assert np.allclose(ab.matrix(), whole.matrix(), atol=1e-14)
    assert np.allclose(ab.matrix(0.0, 1.0) @ ab.matrix(1.0, 0.0), np.eye(4), atol=1e-13)
    with pytest.raises(ValueError):
        ab.apply(np.ones(4), 0.55)
    with pytest.raises(ValueError):
        b.then(a)


def test_dimension_cap():
    H = Hamiltonian.constant(np.eye(8))
    with pytest.raises(ValueError, match="cap"):
        propagator_matrix(H, 1.0, 0.0, 1, max_dim=4)


def test_on_demand_evolution():
    H = harmonic_hamiltonian(1.0)
    ev = OnDemandEvolution(H, 1e-3)
    assert np.array_equal(ev.matrix(0.2, 0.2), np.eye(2))
    assert np.allclose(ev.matrix(1.0, 0.0), harmonic_exact(1.0, 1.0), atol=1e-6)


def test_time_dependent_midpoint_evaluation():
    # H(t) = t * sigma_z: exact phase is the integral t^2/2
    sz = np.diag([1.0, -1.0])
    from bundlerqm.lattice import LatticeOperator
    H = Hamiltonian(lambda t: LatticeOperator(t * sz.astype(complex), None, 2), dim=2, time_dependent=True)
    out = propagate(H, np.array([1.0, 0.0], dtype=complex), 0.0, 1.0, 200).final
    assert abs(out[0] - np.exp(-0.5j)) <= 1e-5


def test_exact_per_mode_matches_expm(grid8, params):
    H = dirac_hamiltonian(grid8, params)
    psi = random_state(H.dim, 0)
    a = Propagator.uniform(H, 0.0, 0.7, 1, "exact_per_mode").apply(psi)
    b = sla.expm(-0.7j * H.matrix(0.0).toarray()) @ psi
    assert np.linalg.norm(a - b) <= 1e-12


def test_exact_per_mode_rejects_potential(grid8, params):
    from bundlerqm.models import PhysicalParams, Potentials
    H = dirac_hamiltonian(grid8, PhysicalParams(charge=1.0), Potentials.gaussian_pulse(0.3, (1.0,), 0.5))
    with pytest.raises(ValueError, match="translation-invariant"):
        step(H, np.ones(H.dim), 0.0, 0.1, "exact_per_mode")


def test_explicit_midpoint_is_second_order_not_unitary():
    H = harmonic_hamiltonian(1.0)
    psi0 = np.array([1.0, 0.0], dtype=complex)
    exact = harmonic_exact(1.0, 1.0) @ psi0
    errs = [np.linalg.norm(propagate(H, psi0, 0.0, 1.0, n, "explicit_midpoint").final - exact)
            for n in (100, 200)]
    assert 3.6 <= errs[0] / errs[1] <= 4.4
    Hh = Hamiltonian.constant(random_hermitian(4, 2))
    traj = propagate(Hh, random_state(4, 3), 0.0, 1.0, 50, "explicit_midpoint")
    assert np.max(np.abs(traj.diagnostics["norm"] - 1)) > 1e-8


def test_eta_form_conserved(grid64, params):
    H = kg_feshbach_villars(grid64, params)
    psi = gaussian_packet(grid64, 2, width=0.5, spinor=[1.0, 0.4])
    q = propagate(H, psi, 0.0, 1.0, 1000, keep_every=1000).diagnostics["eta_form"]
    assert np.max(np.abs(q - q[0])) <= 1e-12 * abs(q[0])


def test_schrodinger_residual(grid8, params):
    H = dirac_hamiltonian(grid8, params)
    psi = random_state(H.dim, 1)
    res = []
    for n in (40, 80):
        traj = propagate(H, psi, 0.0, 0.4, n, "exact_per_mode")
        res.append(schrodinger_residual(H, traj))
    assert 3.6 <= res[0] / res[1] <= 4.4
    Z = Hamiltonian.constant(np.zeros((3, 3)))
    const = Trajectory(np.arange(4.0), np.ones((4, 3)))
    assert schrodinger_residual(Z, const) == 0
    bad = propagate(H, psi, 0.0, 0.4, 40, "exact_per_mode")
    bad.states[20] = 0
    assert schrodinger_residual(H, bad) > 1e2
    with pytest.raises(ValueError):
        schrodinger_residual(H, Trajectory(np.arange(2.0), np.ones((2, H.dim))))


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0, 0.0]), np.ones((2, 2)))


def test_phase_advance():
    v = np.array([1.0, 1j]) / math.sqrt(2)
    assert phase_advance(v, np.exp(-0.3j) * v) == pytest.approx(-0.3)


def test_step_factory_caches_constant():
    f = StepFactory(harmonic_hamiltonian())
    assert f.action(0.0, 0.1) is f.action(5.0, 0.1)
