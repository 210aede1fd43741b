import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import linalg as sla

from bundlerqm.lattice import LatticeOperator, identity_op, laplacian_op, make_grid
from bundlerqm.reduction import (CompanionState, EquationSpec, Hamiltonian, companion_hamiltonian,
                                 companion_pack, companion_system, companion_unpack, frame_change,
                                 frame_changed)


def scalar(value):
    return LatticeOperator(np.array([[value]], dtype=complex))


def test_first_order_is_ihbar_f0():
    omega, hbar = 1.7, 0.5
    spec = EquationSpec(1, (scalar(-1j * omega),), hbar=hbar)
    h = companion_hamiltonian(spec, 0.0).dense()
    assert np.allclose(h, hbar * omega)


@given(st.floats(0.1, 10), st.floats(0.1, 3))
def test_harmonic_companion_spectrum(omega, hbar):
    spec = EquationSpec(2, (scalar(-omega**2), scalar(0.0)), hbar=hbar)
    h = companion_hamiltonian(spec, 0.0).dense()
    assert np.allclose(h, 1j * hbar * np.array([[0, 1], [-omega**2, 0]]))
    ev = np.sort(np.linalg.eigvals(h).real)
    assert np.allclose(ev, [-hbar * omega, hbar * omega], rtol=1e-12)


def test_free_kg_block_pattern():
    g = make_grid(1, 8, 2 * math.pi)
    f0 = laplacian_op(g, "wide") - 1.0 * identity_op(g)
    spec = EquationSpec(2, (f0, 0 * identity_op(g)), grid=g)
    h = companion_hamiltonian(spec, 0.0).dense()
    assert np.all(h[:8, :8] == 0) and np.all(h[8:, 8:] == 0)
    assert np.array_equal(h[:8, 8:], 1j * np.eye(8))
    assert np.allclose(h[8:, :8], 1j * f0.dense())


def test_third_order_structure():
    fs = tuple(scalar(v) for v in (2.0, -1.0, 0.5))
    h = companion_hamiltonian(EquationSpec(3, fs), 0.0).dense() / 1j
    assert np.array_equal(h, np.array([[0, 1, 0], [0, 0, 1], [2, -1, 0.5]]))


def test_third_order_evolution_matches_ode():
    # phi''' = -phi'  ->  phi = a + b cos t + c sin t
    fs = (scalar(0.0), scalar(-1.0), scalar(0.0))
    h = companion_hamiltonian(EquationSpec(3, fs), 0.0).dense()
    psi0 = np.array([1.0, 0.0, -1.0])  # phi = cos t
    t = 0.9
    psi = sla.expm(-1j * t * h) @ psi0
    assert np.allclose(psi, [math.cos(t), -math.sin(t), -math.cos(t)], atol=1e-12)


def test_spec_validation():
    with pytest.raises(ValueError):
        EquationSpec(0, ())
    with pytest.raises(ValueError):
        EquationSpec(2, (scalar(1.0),))
    with pytest.raises(ValueError):
        EquationSpec(1, (scalar(1.0),), hbar=0)


def test_nonfinite_coefficient_rejected():
    spec = EquationSpec(1, (lambda t: scalar(np.inf),))
    with pytest.raises(ValueError, match="not finite"):
        companion_hamiltonian(spec, 0.0)


def test_time_dependent_coefficient():
    spec = EquationSpec(2, (lambda t: scalar(-(1 + t)), scalar(0.0)))
    assert spec.time_dependent
    H = companion_system(spec)
    assert H.matrix(2.0).toarray()[1, 0] == pytest.approx(-3j)


@given(st.lists(st.integers(1, 5), min_size=1, max_size=4), st.integers(0, 2**31))
def test_pack_unpack_round_trip(shape_seed, seed):
    n = len(shape_seed)
    r = np.random.default_rng(seed)
    fields = [r.standard_normal(shape_seed[0]) for _ in range(n)]
    state = companion_pack(fields)
    for k in range(n):
        assert np.array_equal(companion_unpack(state, k), fields[k])
    back = CompanionState.from_vector(state.vector, n)
    assert all(np.array_equal(a, b) for a, b in zip(back.blocks, fields))


def test_unpack_out_of_range():
    state = companion_pack([np.zeros(3), np.ones(3)])
    assert np.array_equal(companion_unpack(state, 1), np.ones(3))
    with pytest.raises(IndexError, match="component index out of range"):
        companion_unpack(state, 2)


def test_pack_shape_mismatch():
    with pytest.raises(ValueError):
        companion_pack([np.zeros(3), np.zeros(4)])


def test_frame_change_identity():
    H = Hamiltonian.constant(np.array([[1.0, 2j], [-2j, 3.0]]))
    out = frame_change(H, np.eye(2), np.zeros((2, 2)), 0.0)
    assert np.array_equal(out.dense(), H.matrix(0.0))


def test_frame_change_phase_shift():
    omega, hbar = 0.8, 1.3
    h = np.array([[1.0, 0.5], [0.5, -1.0]])
    H = Hamiltonian.constant(h, hbar)
    a = lambda t: np.exp(1j * omega * t) * np.eye(2)
    da = lambda t: 1j * omega * np.exp(1j * omega * t) * np.eye(2)
    out = frame_change(H, a, da, 0.4).dense()
    assert np.allclose(out, h - hbar * omega * np.eye(2), atol=1e-14)


def test_frame_change_involution(rng):
    x = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    H = Hamiltonian.constant(x + x.conj().T)
    s = rng.standard_normal((4, 4)) * 0.3
    a = lambda t: sla.expm(s * t)
    da = lambda t: s @ sla.expm(s * t)
    ainv = lambda t: sla.expm(-s * t)
    dainv = lambda t: -s @ sla.expm(-s * t)
    back = frame_change(frame_changed(H, a, da), ainv, dainv, 0.7).dense()
    assert np.linalg.norm(back - H.matrix(0.0)) <= 1e-12 * np.linalg.norm(H.matrix(0.0))


def test_frame_change_differenced_derivative(rng):
    H = Hamiltonian.constant(np.diag([1.0, -1.0]))
    s = np.array([[0.0, 1.0], [-0.5, 0.2]])
    a = lambda t: sla.expm(s * t)
    exact = frame_change(H, a, lambda t: s @ sla.expm(s * t), 0.3).dense()
    approx = frame_change(H, a, None, 0.3, eps=1e-4).dense()
    assert np.linalg.norm(exact - approx) <= 1e-7


def test_frame_change_rejects_singular():
    H = Hamiltonian.constant(np.eye(2))
    with pytest.raises(np.linalg.LinAlgError):
        frame_change(H, np.array([[1.0, 1.0], [1.0, 1.0]]), None, 0.0)


def test_fibre_sized_frame_on_lattice():
    g = make_grid(1, 4, 1.0)
    H = Hamiltonian(lambda t: LatticeOperator(np.eye(8, dtype=complex), g, 2), dim=8,
                    fibre_dim=2, grid=g)
    a = np.array([[2.0, 0.0], [0.0, 1.0]])
    out = frame_change(H, a, np.zeros((2, 2)), 0.0).dense()
    assert np.allclose(out, np.eye(8))


def test_metric_and_pseudo_hermiticity():
    h = np.array([[1.0, -0.5], [0.5, -1.0]])
    H = Hamiltonian.constant(h, metric=(1.0, -1.0))
    assert H.pseudo_hermiticity_error() == 0
    with pytest.raises(ValueError):
        Hamiltonian.constant(h).metric_matrix()


@pytest.mark.parametrize("method,tol", [("exact_per_mode", 1e-6), ("crank_nicolson", 1e-4)])
def test_reduction_equivalence_per_mode(method, tol):
    from bundlerqm.evolution import propagate

    # phi'' = (lapw - 1) phi on mode k: closed form with Omega^2 = 1 + sin^2(k dx)/dx^2
    g = make_grid(1, 16, 2 * math.pi)
    H = companion_system(EquationSpec(2, (laplacian_op(g, "wide") - identity_op(g),
                                          0 * identity_op(g)), grid=g))
    k = 3
    dx = g.spacing[0]
    omega = math.sqrt(1 + (math.sin(k * dx) / dx) ** 2)
    pw = g.plane_wave((k,))
    phi0, dphi0 = pw, 0.4j * pw
    period = 2 * math.pi / omega
    traj = propagate(H, np.concatenate([phi0, dphi0]), 0.0, period, 1000, method, keep_every=100)
    for t, psi in zip(traj.times, traj.states):
        c, s = math.cos(omega * t), math.sin(omega * t)
        exact = c * phi0 + s / omega * dphi0
        assert np.linalg.norm(psi[:16] - exact) <= tol * np.linalg.norm(exact)
