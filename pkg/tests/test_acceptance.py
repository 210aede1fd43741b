"""Acceptance criteria, each at its stated tolerance.

Every test prints one ``PASS``/``FAIL`` line (shown even under output
capture).  Run standalone with ``python tests/test_acceptance.py``.
"""

import math
import sys
import time

import numpy as np
import pytest

from bundlerqm.bundle import FrameFamily
from bundlerqm.harness import (bundle_residual, composition_error, convergence_study,
                               cn_phase_error, dirac_mode_hamiltonian, dispersion_error,
                               eta_form_deviation, frame_covariance_error, gamma_route_errors,
                               gaussian_packet, kg_reduction_error, maxwell_divergence,
                               mean_value_spread, random_hermitian, random_state,
                               transport_composition_error, transported_lifting)
from bundlerqm.evolution import propagate
from bundlerqm.lattice import make_grid
from bundlerqm.models import (PhysicalParams, dirac_hamiltonian, kg_feshbach_villars,
                              maxwell_hamiltonian)
from bundlerqm.reduction import Hamiltonian

pytestmark = pytest.mark.slow

PARAMS = PhysicalParams(mass=1.0, charge=0.0, c=1.0, hbar=1.0)


@pytest.fixture
def verdict(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        assert ok, f"criterion {number} ({title}) failed: {detail}"
    return emit


def test_01_unitarity(verdict):
    grid = make_grid(1, 64, 2 * math.pi)
    H = dirac_hamiltonian(grid, PARAMS)
    psi0 = gaussian_packet(grid, 4, width=0.6, momentum=2.0, spinor=np.array([1, 0, 0, 1]))
    traj = propagate(H, psi0, 0.0, 1.0, 1000, keep_every=1000)
    dev = float(np.max(np.abs(traj.diagnostics["norm"] - 1.0)))
    verdict(1, "unitarity", dev <= 1e-12, f"max |norm - 1| over 1000 steps = {dev:.2e} (tol 1e-12)")


def test_02_composition(verdict):
    u = max(composition_error(8, seed) for seed in range(3))
    ug = max(transport_composition_error(8, seed, seed + 10) for seed in range(3))
    ok = u <= 1e-10 and ug <= 1e-10
    verdict(2, "composition", ok, f"U: {u:.2e}, U_gamma (smooth_random): {ug:.2e} (tol 1e-10)")


def test_03_gamma_correspondence(verdict):
    cases = []
    H8 = Hamiltonian.constant(random_hermitian(8, 0))
    cases.append(("random 8x8", H8, FrameFamily("smooth_random", 8, seed=1)))
    grid = make_grid(1, 16, 2 * math.pi)
    Hd = dirac_mode_hamiltonian(PARAMS, grid, (2,))
    cases.append(("dirac mode", Hd, FrameFamily("smooth_random", 4, seed=2)))
    ok, parts = True, []
    for label, H, frames in cases:
        coarse, fine = gamma_route_errors(H, frames, 0.3, (1e-3, 1e-4))
        ratio = coarse / fine
        ok &= fine <= 1e-2 and 8.0 <= ratio <= 12.0
        parts.append(f"{label}: {coarse:.2e} -> {fine:.2e} (ratio {ratio:.2f})")
    verdict(3, "gamma correspondence", ok,
            "; ".join(parts) + " (tol 1e-2 relative at 1e-4, ratio in [8, 12])")


def test_04_bundle_residual(verdict):
    grid = make_grid(1, 64, 20.0)
    H = dirac_hamiltonian(grid, PARAMS)
    psi0 = gaussian_packet(grid, 4, width=2.0, momentum=0.5, spinor=np.array([1, 0, 0, 0]))
    frames = FrameFamily("smooth_random", H.dim, block=4, amplitude=0.1, seed=0)
    lam = transported_lifting(H, frames, psi0, 0.1, 100)
    r1 = bundle_residual(H, frames, lam, 0.05, 1e-3)
    r2 = bundle_residual(H, frames, lam, 0.05, 2e-3)
    ratio = r2 / r1
    ok = r1 <= 1e-3 and 1.7 <= ratio <= 2.3
    verdict(4, "bundle residual", ok,
            f"|D Psi|/|Psi| = {r1:.2e} at eps = dt = 1e-3 (tol 1e-3), halving ratio {ratio:.3f}")


def test_05_frame_covariance(verdict):
    err = max(frame_covariance_error(seed=s) for s in range(3))
    verdict(5, "frame covariance", err <= 1e-8, f"max |psi~ - A psi| = {err:.2e} (tol 1e-8)")


def test_06_reduction(verdict):
    grid = make_grid(1, 64, 2 * math.pi)
    err = kg_reduction_error(grid, PARAMS, (1,), 1000)
    _, data = convergence_study("harmonic")
    order = data["order"]
    ok = err <= 1e-4 and 1.9 <= order <= 2.1
    verdict(6, "reduction equivalence", ok,
            f"relative error over one period = {err:.2e} (tol 1e-4), order = {order:.3f}")


def test_07_dirac_dispersion(verdict):
    grid = make_grid(3, 8, 2 * math.pi)
    H = dirac_hamiltonian(grid, PARAMS)
    disp = dispersion_error(H, "dirac", PARAMS)
    phase_abs, phase_rel = cn_phase_error(H, PARAMS, 0.1)
    ok = disp <= 1e-12 and phase_abs <= 1e-4
    verdict(7, "dirac dispersion", ok,
            f"oracle vs closed form = {disp:.2e} (tol 1e-12), CN phase error = {phase_abs:.2e} rad"
            f" per step at omega dt = 0.1 (tol 1e-4; relative {phase_rel:.2e})")


def test_08_indefinite_form(verdict):
    grid = make_grid(1, 64, 2 * math.pi)
    H = kg_feshbach_villars(grid, PARAMS)
    psi0 = random_state(H.dim, 8)
    dev = eta_form_deviation(H, psi0, 1.0, 1000)
    verdict(8, "FV conserved form", dev <= 1e-10,
            f"relative drift of <psi|eta|psi> = {dev:.2e} (tol 1e-10)")


def test_09_mean_value(verdict):
    spread = max(mean_value_spread(8, seed) for seed in range(5))
    verdict(9, "mean value frame independence", spread <= 1e-12,
            f"max pairwise difference = {spread:.2e} (tol 1e-12)")


def test_10_maxwell(verdict):
    start = time.perf_counter()
    grid = make_grid(3, 8, 2 * math.pi)
    div = maxwell_divergence(grid, PARAMS, 1000, 0.01)
    disp = dispersion_error(maxwell_hamiltonian(grid, PARAMS), "maxwell", PARAMS)
    elapsed = time.perf_counter() - start
    ok = div <= 1e-10 and disp <= 1e-12 and elapsed <= 120.0
    verdict(10, "maxwell constraints", ok,
            f"max divergence = {div:.2e} (tol 1e-10), dispersion = {disp:.2e} (tol 1e-12),"
            f" runtime {elapsed:.1f} s (limit 120 s)")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
