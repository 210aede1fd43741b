"""Exact per-mode oracles, reusable invariant checks and the batch suite.

The oracles never touch the time-stepping code: per-mode matrices are
obtained by projecting the lattice Hamiltonian onto explicit plane waves and
diagonalized densely.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla

from .bundle import (EvolutionTransport, FrameFamily, Lifting, Path, derivation_along_path,
                     fibre_inner, lift_operator, lift_state, mean_value,
                     transport_coefficients_from_hamiltonian,
                     transport_coefficients_from_transport)
from .evolution import (OnDemandEvolution, Propagator, StepFactory, propagate,
                        propagator_matrix)
from .lattice import Grid, is_translation_invariant, make_grid
from .models import (PhysicalParams, build_model, dirac_hamiltonian, kg_canonical,
                     kg_feshbach_villars, kg_five_component, kg_five_state,
                     maxwell_constraints, maxwell_hamiltonian)
from .reduction import Hamiltonian, frame_changed

DEFECT_COND = 1e10


# closed-form dispersion ---------------------------------------------------

def dirac_energy(params: PhysicalParams, ktilde) -> float:
    k2 = float(np.sum(np.square(ktilde)))
    return math.sqrt((params.c * params.hbar) ** 2 * k2 + params.rest_energy ** 2)


def kg_frequency(params: PhysicalParams, ktilde) -> float:
    """``Omega_k = sqrt(c^2 k~^2 + (mc^2/hbar)^2)``."""
    k2 = float(np.sum(np.square(ktilde)))
    return math.sqrt(params.c ** 2 * k2 + (params.rest_energy / params.hbar) ** 2)


def maxwell_frequency(params: PhysicalParams, ktilde) -> float:
    return params.c * float(np.linalg.norm(ktilde))


def expected_spectrum(model: str, params: PhysicalParams, grid: Grid, mode) -> np.ndarray:
    """Closed-form per-mode energies, sorted ascending."""
    kt = grid.discrete_momentum(mode)
    hb = params.hbar
    if model == "dirac":
        e = dirac_energy(params, kt)
        vals = [-e, -e, e, e]
    elif model in ("kg_canonical", "kg_feshbach_villars"):
        e = hb * kg_frequency(params, kt)
        vals = [-e, e]
    elif model == "kg_five_component":
        e = hb * kg_frequency(params, kt)
        vals = [-e, 0.0, 0.0, 0.0, e]
    elif model == "maxwell":
        e = hb * maxwell_frequency(params, kt)
        vals = [-e, -e, 0.0, 0.0, e, e]
    elif model == "spin1":
        e = hb * kg_frequency(params, kt)
        vals = [-e] * 4 + [e] * 4
    else:
        raise ValueError(f"no closed-form dispersion for {model!r}")
    return np.sort(np.array(vals))


# oracles ------------------------------------------------------------------

@dataclass
class ModeOracle:
    """Exact data for one Fourier mode of a translation-invariant model."""

    model: str
    mode: tuple[int, ...]
    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    hbar: float = 1.0
    defective: bool = False
    reconstruction_error: float = 0.0

    @property
    def fibre_dim(self) -> int:
        return self.matrix.shape[0]

    def propagator(self, dt: float) -> np.ndarray:
        """``exp(-i dt H_k / hbar)``; defective modes fall back to ``expm``."""
        if self.defective:
            return sla.expm(-1j * dt / self.hbar * self.matrix)
        v = self.eigenvectors
        phase = np.exp(-1j * dt / self.hbar * self.eigenvalues)
        if np.allclose(v.conj().T @ v, np.eye(len(v)), atol=1e-13):
            return (v * phase) @ v.conj().T
        return (v * phase) @ np.linalg.inv(v)

    def sorted_energies(self) -> np.ndarray:
        ev = self.eigenvalues
        return ev[np.lexsort((ev.imag, ev.real))] if np.iscomplexobj(ev) else np.sort(ev)


def _decompose(h: np.ndarray):
    scale = max(np.linalg.norm(h), 1e-300)
    if np.allclose(h, h.conj().T, atol=1e-14 * scale):
        w, v = np.linalg.eigh((h + h.conj().T) / 2)
        return w, v, False, float(np.linalg.norm(v @ np.diag(w) @ v.conj().T - h) / scale)
    w, v = np.linalg.eig(h)
    cond = np.linalg.cond(v)
    if not np.isfinite(cond) or cond > DEFECT_COND:
        return w, v, True, math.inf
    err = float(np.linalg.norm(v @ np.diag(w) @ np.linalg.inv(v) - h) / scale)
    return w, v, err > 1e-12, err


def mode_basis(grid: Grid, mode, fibre: int) -> np.ndarray:
    """Columns ``e_a (x) exp(i k x)`` for ``a < fibre`` (unnormalized)."""
    pw = grid.plane_wave(mode)
    return np.kron(np.eye(fibre), pw[:, None])


def project_mode(H: Hamiltonian, mode, t: float = 0.0) -> np.ndarray:
    """Per-mode matrix by plane-wave projection ``E^dagger H E / n_sites``."""
    grid = H.grid
    e = mode_basis(grid, mode, H.fibre_dim)
    return e.conj().T @ (H.matrix(t) @ e) / grid.n_sites


def fourier_oracle(model: str | Hamiltonian, params: PhysicalParams, grid: Grid, k,
                   _checked: bool = False) -> ModeOracle:
    """Exact eigen-decomposition of ``model`` restricted to mode ``k``."""
    H = build_model(model, grid, params) if isinstance(model, str) else model
    if not _checked and (H.time_dependent or not is_translation_invariant(H.evaluate(0.0))):
        raise ValueError("fourier_oracle needs a translation-invariant model")
    h = project_mode(H, k)
    w, v, defective, err = _decompose(h)
    name = model if isinstance(model, str) else H.name
    return ModeOracle(name, tuple(int(x) for x in k), h, w, v, H.hbar, defective, err)


def all_mode_oracles(H: Hamiltonian, params: PhysicalParams | None = None) -> list[ModeOracle]:
    if H.time_dependent or not is_translation_invariant(H.evaluate(0.0)):
        raise ValueError("model is not translation-invariant")
    return [fourier_oracle(H, params, H.grid, m, _checked=True) for m in H.grid.modes()]


def oracle_evolve(H: Hamiltonian, oracles: Sequence[ModeOracle], psi: np.ndarray, dt: float) -> np.ndarray:
    """Whole-lattice evolution assembled mode by mode from explicit plane waves."""
    grid, f = H.grid, H.fibre_dim
    out = np.zeros(H.dim, dtype=complex)
    for o in oracles:
        e = mode_basis(grid, o.mode, f)
        out += e @ (o.propagator(dt) @ (e.conj().T @ psi)) / grid.n_sites
    return out


# report -------------------------------------------------------------------

@dataclass
class Check:
    name: str
    measured: float
    tolerance: float | None
    passed: bool
    seconds: float = 0.0
    note: str = ""

    def __post_init__(self):
        self.passed = bool(self.passed)
        self.measured = float(self.measured)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        for key in ("measured", "tolerance"):
            v = d[key]
            if isinstance(v, float) and not math.isfinite(v):
                d[key] = str(v)
        return d


@dataclass
class Report:
    checks: list[Check] = field(default_factory=list)

    def add(self, check: Check):
        self.checks.append(check)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def sorted(self) -> list[Check]:
        return sorted(self.checks, key=lambda c: c.name)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_json(self) -> str:
        return json.dumps({"pass": self.passed, "checks": [c.as_dict() for c in self.sorted()]},
                          indent=2)

    def to_text(self) -> str:
        lines = []
        for c in self.sorted():
            tol = "-" if c.tolerance is None else f"{c.tolerance:.3g}"
            flag = "PASS" if c.passed else "FAIL"
            note = f"  ({c.note})" if c.note else ""
            lines.append(f"{flag}  {c.name:<44s} measured={c.measured:.6g} tol={tol} "
                         f"[{c.seconds:.2f}s]{note}")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'} "
                     f"({sum(c.passed for c in self.checks)}/{len(self.checks)})")
        return "\n".join(lines)


def _timed(name: str, fn: Callable[[], float], tolerance: float, *, lower: float | None = None,
           note: str = "") -> Check:
    """Run ``fn`` and compare with ``tolerance`` (or the range ``[lower, tolerance]``)."""
    start = time.perf_counter()
    try:
        measured = float(fn())
    except Exception as exc:  # recorded, not thrown
        return Check(name, math.nan, tolerance, False, time.perf_counter() - start,
                     f"{type(exc).__name__}: {exc}")
    ok = math.isfinite(measured) and measured <= tolerance
    if lower is not None:
        ok = ok and measured >= lower
        note = note or f"range [{lower}, {tolerance}]"
    return Check(name, measured, tolerance, ok, time.perf_counter() - start, note)


# reusable measurements ----------------------------------------------------

def random_hermitian(n: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return (x + x.conj().T) / 2


def random_state(n: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return v / np.linalg.norm(v)


def gaussian_packet(grid: Grid, fibre: int, *, width: float, momentum=0.0,
                    spinor=None, center=None) -> np.ndarray:
    """Normalized Gaussian ``exp(-|x-x0|^2/(4 w^2) + i k0.x)`` times a fibre vector."""
    x = grid.coordinates()
    x0 = np.array(center if center is not None else [L / 2 for L in grid.lengths])[:, None]
    k0 = np.broadcast_to(np.asarray(momentum, dtype=float), (grid.dim,))[:, None]
    env = np.exp(-np.sum((x - x0) ** 2, axis=0) / (4 * width**2) + 1j * np.sum(k0 * x, axis=0))
    spinor = np.eye(fibre)[0] if spinor is None else np.asarray(spinor)
    psi = np.kron(spinor, env)
    return psi / np.linalg.norm(psi)


def harmonic_hamiltonian(omega: float = 1.0, hbar: float = 1.0) -> Hamiltonian:
    """Companion form of ``phi'' = -omega^2 phi``."""
    return Hamiltonian.constant(1j * hbar * np.array([[0, 1], [-omega**2, 0]]), hbar, name="harmonic")


def harmonic_exact(omega: float, t: float) -> np.ndarray:
    c, s = math.cos(omega * t), math.sin(omega * t)
    return np.array([[c, s / omega], [-omega * s, c]])


def norm_deviation(H: Hamiltonian, psi0: np.ndarray, t1: float, n_steps: int) -> float:
    """``max_j | |psi_j| - |psi_0| |`` over all steps (``psi0`` normalized)."""
    traj = propagate(H, psi0, 0.0, t1, n_steps, keep_every=n_steps)
    n = traj.diagnostics["norm"]
    return float(np.max(np.abs(n - n[0])))


def eta_form_deviation(H: Hamiltonian, psi0: np.ndarray, t1: float, n_steps: int) -> float:
    """Largest change of ``<psi|eta|psi>`` relative to its initial magnitude."""
    traj = propagate(H, psi0, 0.0, t1, n_steps, keep_every=n_steps)
    q = traj.diagnostics["eta_form"]
    return float(np.max(np.abs(q - q[0])) / abs(q[0]))


def composition_error(dim: int = 8, seed: int = 0, times=(0.0, 0.4, 1.0), dt: float = 0.01) -> float:
    """``|U(t3,t1) - U(t3,t2) U(t2,t1)|`` with commensurate uniform steps."""
    H = Hamiltonian.constant(random_hermitian(dim, seed))
    t1, t2, t3 = times
    n = lambda a, b: int(round((b - a) / dt))
    u31 = propagator_matrix(H, t3, t1, n(t1, t3))
    u32 = propagator_matrix(H, t3, t2, n(t2, t3))
    u21 = propagator_matrix(H, t2, t1, n(t1, t2))
    return float(np.linalg.norm(u31 - u32 @ u21, 2))


def transport_composition_error(dim: int = 8, seed: int = 0, frame_seed: int = 1,
                                times=(0.0, 0.4, 1.0), dt: float = 0.01) -> float:
    H = Hamiltonian.constant(random_hermitian(dim, seed))
    frames = FrameFamily("smooth_random", dim, seed=frame_seed)
    ut = EvolutionTransport(frames, OnDemandEvolution(H, dt))
    t1, t2, t3 = times
    worst = np.linalg.norm(ut.matrix(t1, t1) - np.eye(dim), 2)
    return float(max(worst, np.linalg.norm(ut.matrix(t3, t1) - ut.matrix(t3, t2) @ ut.matrix(t2, t1), 2)))


def dirac_mode_hamiltonian(params: PhysicalParams, grid: Grid, mode) -> Hamiltonian:
    """The free Dirac generator of one mode as a 4x4 constant Hamiltonian."""
    return Hamiltonian.constant(project_mode(dirac_hamiltonian(grid, params), mode), params.hbar)


def gamma_route_errors(H: Hamiltonian, frames: FrameFamily, s: float,
                       eps_ladder=(1e-3, 1e-4), max_step: float | None = None) -> list[float]:
    """Relative discrepancy of finite-difference vs formula transport coefficients."""
    g = transport_coefficients_from_hamiltonian(frames, H, s)
    out = []
    for eps in eps_ladder:
        ev = OnDemandEvolution(H, max_step or eps / 50)
        fd = transport_coefficients_from_transport(EvolutionTransport(frames, ev), s, eps)
        out.append(float(np.linalg.norm(fd - g) / np.linalg.norm(g)))
    return out


def fitted_order(xs: Sequence[float], errors: Sequence[float]) -> float:
    return float(np.polyfit(np.log(xs), np.log(errors), 1)[0])


def transported_lifting(H: Hamiltonian, frames: FrameFamily, psi0: np.ndarray,
                        t1: float, n_steps: int) -> Lifting:
    traj = propagate(H, psi0, 0.0, t1, n_steps)
    return Lifting.from_states(frames, Path(0.0, t1), traj.times, traj.states)


def bundle_residual(H: Hamiltonian, frames: FrameFamily, lifting: Lifting, s: float,
                    eps: float) -> float:
    """``|D lambda(s)| / |lambda(s)|`` through the transport-coefficient form."""
    gamma = transport_coefficients_from_hamiltonian(frames, H, s)
    d = derivation_along_path(None, lifting, s, eps, gamma=gamma)
    return float(np.linalg.norm(d) / np.linalg.norm(lifting(s)))


def frame_covariance_error(t1: float = 0.02, n_steps: int = 100, omega: float = 1.0,
                           seed: int = 4, amplitude: float = 0.3) -> float:
    """``|psi~(t) - A(t) psi(t)|`` for the harmonic companion and a random smooth ``A``."""
    H = harmonic_hamiltonian(omega)
    frames = FrameFamily("smooth_random", 2, seed=seed, amplitude=amplitude)
    Ht = frame_changed(H, frames.matrix, frames.derivative)
    psi0 = np.array([1.0, 0.3j])
    a = propagate(H, psi0, 0.0, t1, n_steps)
    b = propagate(Ht, frames.matrix(0.0) @ psi0, 0.0, t1, n_steps)
    return float(max(np.linalg.norm(y - frames.matrix(t) @ x)
                     for t, x, y in zip(a.times, a.states, b.states)))


def gamma_covariance_error(dim: int = 4, seed: int = 0, t: float = 0.3) -> float:
    """``Gamma~ - (A Gamma A^-1 + A' A^-1)`` for ``H~`` the frame-changed ``H`` (identity frames)."""
    H = Hamiltonian.constant(random_hermitian(dim, seed))
    fa = FrameFamily("smooth_random", dim, seed=seed + 1)
    ident = FrameFamily("identity", dim)
    g = transport_coefficients_from_hamiltonian(ident, H, t)
    gt = transport_coefficients_from_hamiltonian(ident, frame_changed(H, fa.matrix, fa.derivative), t)
    a, da, ai = fa.matrix(t), fa.derivative(t), fa.inverse(t)
    return float(np.linalg.norm(gt - (a @ g @ ai + da @ ai)) / np.linalg.norm(gt))


def mean_value_spread(dim: int = 8, seed: int = 0, t: float = 0.7) -> float:
    """Largest pairwise difference of fibre mean values over the three frame kinds."""
    a = random_hermitian(dim, seed)
    psi = random_state(dim, seed + 1)
    flat = np.vdot(psi, a @ psi) / np.vdot(psi, psi)
    vals = [flat]
    for kind in ("identity", "scalar_phase", "smooth_random"):
        fr = FrameFamily(kind, dim, seed=seed + 2, omega=1.3)
        vals.append(mean_value(fr, lift_operator(fr, a, t), lift_state(fr, psi, t), t))
    return float(max(abs(x - y) for x in vals for y in vals))


def fibre_norm_drift(dim: int = 8, seed: int = 0, t1: float = 1.0, n_steps: int = 100) -> float:
    """Change of ``<Psi|Psi>_x`` along a transported lifting (Hermitian ``H``)."""
    H = Hamiltonian.constant(random_hermitian(dim, seed))
    frames = FrameFamily("smooth_random", dim, seed=seed + 3)
    lam = transported_lifting(H, frames, random_state(dim, seed), t1, n_steps)
    norms = [fibre_inner(frames, t, v, v).real for t, v in zip(lam.times, lam.values)]
    return float(np.max(np.abs(np.array(norms) - norms[0])))


def dispersion_error(H: Hamiltonian, model: str, params: PhysicalParams) -> float:
    """Largest oracle-vs-closed-form eigenvalue deviation over all modes (relative to max(1, |E|))."""
    worst = 0.0
    for o in all_mode_oracles(H, params):
        ref = expected_spectrum(model, params, H.grid, o.mode)
        got = o.sorted_energies()
        scale = max(1.0, float(np.max(np.abs(ref))))
        worst = max(worst, float(np.max(np.abs(got - ref))) / scale)
    return worst


def cn_phase_error(H: Hamiltonian, params: PhysicalParams, omega_dt: float = 0.1) -> tuple[float, float]:
    """Per-step CN phase error on every eigenmode, with ``max omega dt = omega_dt``.

    Returns ``(absolute error in radians, relative error)``, both maxima.
    """
    oracles = all_mode_oracles(H, params)
    omega_max = max(float(np.max(np.abs(o.eigenvalues))) for o in oracles) / H.hbar
    dt = omega_dt / omega_max
    columns, expected = [], []
    for o in oracles:
        e = mode_basis(H.grid, o.mode, H.fibre_dim)
        for w, v in zip(o.eigenvalues, o.eigenvectors.T):
            if abs(w) < 1e-12:
                continue
            columns.append(e @ v / math.sqrt(H.grid.n_sites))
            expected.append(-w.real * dt / H.hbar)
    before = np.array(columns).T
    after = StepFactory(H).action(0.0, dt).forward(before)
    got = np.angle(np.einsum("ij,ij->j", before.conj(), after))
    err = np.abs(np.angle(np.exp(1j * (got - np.array(expected)))))
    return float(err.max()), float(np.max(err / np.abs(expected)))


def oracle_consistency_error(H: Hamiltonian, params: PhysicalParams, dt: float = 0.37,
                             seed: int = 0) -> float:
    """Mode-assembled oracle evolution vs whole-lattice ``exact_per_mode`` step."""
    oracles = all_mode_oracles(H, params)
    psi = random_state(H.dim, seed)
    a = oracle_evolve(H, oracles, psi, dt)
    b = Propagator.uniform(H, 0.0, dt, 1, "exact_per_mode").apply(psi)
    return float(np.linalg.norm(a - b))


def maxwell_divergence(grid: Grid, params: PhysicalParams, n_steps: int, dt: float,
                       seed: int = 0) -> float:
    """Largest lattice divergence of ``E`` or ``H`` over a CN run from curl initial data."""
    from .lattice import curl_op

    rng = np.random.default_rng(seed)
    curl = curl_op(grid).sparse()
    e0 = curl @ rng.standard_normal(3 * grid.n_sites)
    h0 = curl @ rng.standard_normal(3 * grid.n_sites)
    psi = np.concatenate([e0, h0]).astype(complex)
    psi /= np.linalg.norm(psi)
    H = maxwell_hamiltonian(grid, params)
    factory = StepFactory(H)
    worst = 0.0
    for j in range(n_steps):
        psi = factory.action(j * dt, dt).forward(psi)
        de, dh = maxwell_constraints(grid, psi)
        worst = max(worst, float(np.max(np.abs(de))), float(np.max(np.abs(dh))))
    return worst


def kg_reduction_error(grid: Grid, params: PhysicalParams, mode=(1,), n_steps: int = 1000) -> float:
    """Canonical KG plane wave over one period vs the closed-form scalar solution."""
    H = kg_canonical(grid, params)
    omega = kg_frequency(params, grid.discrete_momentum(mode))
    period = 2 * math.pi / omega
    pw = grid.plane_wave(mode)
    phi0, dphi0 = pw, -1j * 0.5 * omega * pw
    traj = propagate(H, np.concatenate([phi0, dphi0]), 0.0, period, n_steps, keep_every=10)
    worst = 0.0
    for t, psi in zip(traj.times, traj.states):
        c, s = math.cos(omega * t), math.sin(omega * t)
        exact = np.concatenate([c * phi0 + s / omega * dphi0, -omega * s * phi0 + c * dphi0])
        worst = max(worst, float(np.linalg.norm(psi - exact) / np.linalg.norm(exact)))
    return worst


def five_component_agreement(grid: Grid, params: PhysicalParams, t1: float = 1.0,
                             n_steps: int = 100) -> float:
    """First component of the five-component field divided by ``mc^2`` vs canonical ``phi``."""
    rng = np.random.default_rng(3)
    phi = rng.standard_normal(grid.n_sites) + 0j
    dphi = rng.standard_normal(grid.n_sites) + 0j
    ns = grid.n_sites
    a = propagate(kg_canonical(grid, params), np.concatenate([phi, dphi]), 0.0, t1, n_steps,
                  keep_every=n_steps).final
    b = propagate(kg_five_component(grid, params), kg_five_state(grid, params, phi, dphi),
                  0.0, t1, n_steps, keep_every=n_steps).final
    return float(np.linalg.norm(b[:ns] / params.rest_energy - a[:ns]) / np.linalg.norm(a[:ns]))


# convergence --------------------------------------------------------------

def _validate_ladder(dt_ladder: Sequence[float]):
    if len(dt_ladder) < 3:
        raise ValueError("a convergence ladder needs at least 3 step sizes")
    for a, b in zip(dt_ladder, dt_ladder[1:]):
        if not math.isclose(b, a / 2, rel_tol=1e-9):
            raise ValueError(f"ladder entries must halve: {a} -> {b}")


def convergence_study(model: str = "harmonic", dt_ladder: Sequence[float] = (0.02, 0.01, 0.005, 0.0025),
                      method: str = "crank_nicolson", *, params: PhysicalParams | None = None,
                      grid: Grid | None = None, t_final: float | None = None,
                      order_window: tuple[float, float] = (1.9, 2.1)) -> tuple[Report, dict]:
    """Global error at ``t_final`` for each ``dt``, with a fitted order.

    ``model`` is ``"harmonic"`` (omega = 1, one period by default) or a
    lattice model name, checked against mode-assembled exact evolution of a
    few low modes.  Returns the report and the raw ladder data.
    """
    _validate_ladder(dt_ladder)
    params = params or PhysicalParams()
    if model == "harmonic":
        H = harmonic_hamiltonian(1.0, params.hbar)
        t_final = 2 * math.pi if t_final is None else t_final
        psi0 = np.array([1.0, 0.0], dtype=complex)
        exact = harmonic_exact(1.0, t_final) @ psi0
    else:
        grid = grid or make_grid(1, 32, 2 * math.pi)
        H = build_model(model, grid, params)
        t_final = 1.0 if t_final is None else t_final
        oracles = all_mode_oracles(H, params)
        psi0 = np.zeros(H.dim, dtype=complex)
        for o in oracles:
            if max(abs(m if m <= n // 2 else m - n) for m, n in zip(o.mode, grid.shape)) <= 2:
                e = mode_basis(grid, o.mode, H.fibre_dim)
                psi0 += e @ np.ones(H.fibre_dim) / math.sqrt(grid.n_sites)
        psi0 /= np.linalg.norm(psi0)
        exact = oracle_evolve(H, oracles, psi0, t_final)
    errors, drifts, dts = [], [], []
    start = time.perf_counter()
    for dt in dt_ladder:
        n = max(1, int(round(t_final / dt)))
        traj = propagate(H, psi0, 0.0, t_final, n, method, keep_every=n)
        errors.append(float(np.linalg.norm(traj.final - exact) / np.linalg.norm(exact)))
        norms = traj.diagnostics["norm"]
        drifts.append(float(np.max(np.abs(norms - norms[0]))))
        dts.append(t_final / n)
    seconds = time.perf_counter() - start
    report = Report()
    tag = f"convergence.{model}.{method}"
    data = {"dt": dts, "error": errors, "norm_drift": drifts, "order": math.nan}
    if method == "exact_per_mode":
        report.add(Check(f"{tag}.roundoff", max(errors), 1e-10, max(errors) <= 1e-10, seconds,
                         "exact method: order fit skipped"))
        return report, data
    monotone = all(b < a for a, b in zip(errors, errors[1:]))
    report.add(Check(f"{tag}.monotone", float(monotone), None, monotone, 0.0,
                     "errors decrease along the ladder"))
    order = fitted_order(dts, errors)
    data["order"] = order
    lo, hi = order_window
    report.add(Check(f"{tag}.order", order, hi, lo <= order <= hi, seconds, f"range [{lo}, {hi}]"))
    if method == "explicit_midpoint":
        report.add(Check(f"{tag}.norm_drift", max(drifts), None, True, 0.0,
                         "recorded only: the explicit midpoint rule is not unitary"))
    return report, data


# suite --------------------------------------------------------------------

SUITE_MODELS = ("dirac", "kg_canonical", "kg_feshbach_villars", "kg_five_component",
                "maxwell", "spin1")


@dataclass
class SuiteConfig:
    """Settings for :func:`run_invariant_suite`.

    ``select`` keeps only checks whose name equals an entry or starts with
    ``entry + "."``.  ``tolerance_scale`` multiplies every upper tolerance.
    """

    models: tuple[str, ...] = SUITE_MODELS
    dim: int = 1
    points: int = 64
    length: float = 2 * math.pi
    points_3d: int = 4
    n_steps: int = 1000
    t_final: float = 1.0
    maxwell_steps: int = 100
    seed: int = 0
    tolerance_scale: float = 1.0
    select: tuple[str, ...] = ()
    params: PhysicalParams = field(default_factory=PhysicalParams)

    def __post_init__(self):
        unknown = set(self.models) - set(SUITE_MODELS)
        if unknown:
            raise ValueError(f"unknown models in suite: {sorted(unknown)}")
        if self.n_steps < 3 or self.maxwell_steps < 1:
            raise ValueError("step counts too small")
        if not self.tolerance_scale >= 0:
            raise ValueError("tolerance_scale must be >= 0")

    def wants(self, name: str) -> bool:
        if not self.select:
            return True
        return any(name == s or name.startswith(s + ".") for s in self.select)


def _suite_plan(cfg: SuiteConfig) -> list[tuple[str, Callable[[], float], float, dict]]:
    p = cfg.params
    g1 = make_grid(cfg.dim, cfg.points, cfg.length)
    g3 = make_grid(3, cfg.points_3d, cfg.length)
    small3 = make_grid(3, 4, cfg.length)
    T, n = cfg.t_final, cfg.n_steps
    plan: list = []
    add = lambda name, fn, tol, **kw: plan.append((name, fn, tol, kw))

    def packet(H):
        return gaussian_packet(H.grid, H.fibre_dim, width=cfg.length / 10, momentum=1.0)

    add("composition.propagator", lambda: composition_error(8, cfg.seed), 1e-10)
    add("composition.transport", lambda: transport_composition_error(8, cfg.seed), 1e-10)
    add("bundle.fibre_norm", lambda: fibre_norm_drift(8, cfg.seed), 1e-12)
    add("bundle.mean_value_frames", lambda: mean_value_spread(8, cfg.seed), 1e-12)
    add("bundle.gamma_covariance", lambda: gamma_covariance_error(4, cfg.seed), 1e-8)
    add("reduction.frame_covariance", lambda: frame_covariance_error(), 1e-8)
    add("convergence.harmonic", lambda: convergence_study("harmonic")[1]["order"], 2.1, lower=1.9)

    if "dirac" in cfg.models:
        d = lambda: dirac_hamiltonian(g1, p)
        add("unitarity.dirac", lambda: norm_deviation(d(), packet(d()), T, n), 1e-12)
        add("dispersion.dirac", lambda: dispersion_error(d(), "dirac", p), 1e-12)
        add("oracle.consistency.dirac", lambda: oracle_consistency_error(d(), p), 1e-11)
        add("cn_phase.dirac", lambda: cn_phase_error(d(), p)[0], 1e-4)

        def gamma_ratio():
            errs = gamma_route_errors(dirac_mode_hamiltonian(p, g1, (1,) * g1.dim),
                                      FrameFamily("smooth_random", 4, seed=cfg.seed), 0.2)
            return errs[-1]
        add("bundle.gamma_routes.dirac", gamma_ratio, 1e-2)

        def residual():
            H = dirac_hamiltonian(make_grid(1, 64, 20.0), p)
            fr = FrameFamily("smooth_random", H.dim, block=4, seed=cfg.seed, amplitude=0.1)
            psi = gaussian_packet(H.grid, 4, width=2.0, momentum=0.5)
            lam = transported_lifting(H, fr, psi, 0.01, 10)
            return bundle_residual(H, fr, lam, 0.005, 1e-3)
        add("bundle.residual.dirac", residual, 1e-3)

    if "kg_canonical" in cfg.models:
        add("dispersion.kg_canonical",
            lambda: dispersion_error(kg_canonical(g1, p), "kg_canonical", p), 1e-12)
        add("reduction.kg_closed_form",
            lambda: kg_reduction_error(g1, p, (1,) * g1.dim, 1000), 1e-4)
    if "kg_feshbach_villars" in cfg.models:
        fv = lambda: kg_feshbach_villars(g1, p)
        add("dispersion.kg_feshbach_villars",
            lambda: dispersion_error(fv(), "kg_feshbach_villars", p), 1e-12)
        add("eta_form.kg_feshbach_villars",
            lambda: eta_form_deviation(fv(), packet(fv()), T, n), 1e-10)
        add("pseudo_hermiticity.kg_feshbach_villars", lambda: fv().pseudo_hermiticity_error(), 1e-14)
    if "kg_five_component" in cfg.models:
        add("dispersion.kg_five_component",
            lambda: dispersion_error(kg_five_component(small3, p), "kg_five_component", p), 1e-12)
        add("reduction.five_component_vs_canonical",
            lambda: five_component_agreement(small3, p), 1e-10)
    if "maxwell" in cfg.models:
        add("dispersion.maxwell",
            lambda: dispersion_error(maxwell_hamiltonian(g3, p), "maxwell", p), 1e-12)
        add("maxwell.divergence", lambda: maxwell_divergence(g3, p, cfg.maxwell_steps, 0.01), 1e-10)
        add("unitarity.maxwell",
            lambda: norm_deviation(maxwell_hamiltonian(g3, p),
                                   random_state(6 * g3.n_sites, cfg.seed), 1.0, cfg.maxwell_steps), 1e-12)
    if "spin1" in cfg.models:
        add("dispersion.spin1", lambda: dispersion_error(build_model("spin1", g1, p), "spin1", p), 1e-12)
    return plan


def run_invariant_suite(config: SuiteConfig | None = None) -> Report:
    """Run every selected check; failures are recorded in the report."""
    cfg = config or SuiteConfig()
    report = Report()
    for name, fn, tol, kw in _suite_plan(cfg):
        if not cfg.wants(name):
            continue
        lower = kw.get("lower")
        scaled = tol if lower is not None else tol * cfg.tolerance_scale
        report.add(_timed(name, fn, scaled, lower=lower))
    return report
