"""Relativistic wave equations in first-order (Schrodinger-like) form.

All Hamiltonians act on component-major lattice states.  Units are explicit:
``PhysicalParams`` carries ``c`` and ``hbar`` (both default to 1).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import sparse

from .lattice import (HERMITIAN, Grid, LatticeOperator, central_difference, curl_op,
                      div_op, momentum_op, multiplication_op)
from .reduction import EquationSpec, Hamiltonian, companion_hamiltonian

FieldFunction = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class PhysicalParams:
    mass: float = 1.0
    charge: float = 0.0
    c: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        if self.mass < 0:
            raise ValueError("mass must be >= 0")
        if not (self.c > 0 and self.hbar > 0):
            raise ValueError("c and hbar must be positive")

    @property
    def rest_energy(self) -> float:
        return self.mass * self.c**2


@dataclass(frozen=True)
class Potentials:
    """External electromagnetic 4-potential ``(phi, A)``.

    ``scalar(t, x)`` returns the site values of ``phi`` given coordinates ``x``
    of shape ``(dim, n_sites)``; ``vector(t, x)`` returns shape ``(3, n_sites)``
    (components beyond the grid dimension are still applied as multipliers).
    ``scalar_rate`` is ``dphi/dt``; without it the rate is differenced only if
    ``allow_differencing`` is set.
    """

    scalar: FieldFunction | None = None
    vector: FieldFunction | None = None
    scalar_rate: FieldFunction | None = None
    time_dependent: bool = False
    allow_differencing: bool = False
    difference_step: float = 1e-5
    label: str = "custom"

    @property
    def vanishes(self) -> bool:
        return self.scalar is None and self.vector is None

    def phi(self, grid: Grid, t: float) -> np.ndarray:
        if self.scalar is None:
            return np.zeros(grid.n_sites)
        return self._shaped(self.scalar(t, grid.coordinates()), (grid.n_sites,), "phi")

    def a(self, grid: Grid, t: float) -> np.ndarray:
        if self.vector is None:
            return np.zeros((3, grid.n_sites))
        return self._shaped(self.vector(t, grid.coordinates()), (3, grid.n_sites), "A")

    def phi_rate(self, grid: Grid, t: float) -> np.ndarray:
        if self.scalar is None:
            return np.zeros(grid.n_sites)
        if self.scalar_rate is not None:
            return self._shaped(self.scalar_rate(t, grid.coordinates()), (grid.n_sites,), "dphi/dt")
        if not self.time_dependent:
            return np.zeros(grid.n_sites)
        if not self.allow_differencing:
            raise ValueError("dphi/dt is not available for these potentials")
        h = self.difference_step
        return (self.phi(grid, t + h) - self.phi(grid, t - h)) / (2 * h)

    @property
    def has_rate(self) -> bool:
        return (self.scalar is None or self.scalar_rate is not None
                or not self.time_dependent or self.allow_differencing)

    @staticmethod
    def _shaped(values, shape, label):
        values = np.asarray(values, dtype=float)
        try:
            values = np.broadcast_to(values, shape)
        except ValueError:
            raise ValueError(f"{label} has shape {values.shape}, grid expects {shape}") from None
        if not np.all(np.isfinite(values)):
            raise ValueError(f"{label} is not finite")
        return values

    # presets -------------------------------------------------------------

    @classmethod
    def zero(cls) -> "Potentials":
        return cls(label="zero")

    @classmethod
    def uniform(cls, phi0: float = 0.0, a0=(0.0, 0.0, 0.0)) -> "Potentials":
        a0 = np.asarray(a0, dtype=float).reshape(3, 1)
        return cls(scalar=lambda t, x: np.full(x.shape[1], phi0),
                   vector=lambda t, x: np.repeat(a0, x.shape[1], axis=1),
                   label="uniform")

    @classmethod
    def plane_wave(cls, amplitude: float, wavevector, omega: float,
                   polarization=(0.0, 1.0, 0.0)) -> "Potentials":
        """Vector potential ``A = amplitude * pol * cos(k.x - omega t)``, ``phi = 0``."""
        pol = np.asarray(polarization, dtype=float).reshape(3, 1)
        k = np.asarray(wavevector, dtype=float)

        def vector(t, x):
            phase = k[:x.shape[0]] @ x - omega * t
            return amplitude * pol * np.cos(phase)[None, :]

        return cls(vector=vector, time_dependent=omega != 0, label="plane_wave")

    @classmethod
    def gaussian_pulse(cls, amplitude: float, center, width: float,
                       t_peak: float = 0.0, duration: float = np.inf) -> "Potentials":
        """Scalar bump ``phi = a exp(-|x-x0|^2/2w^2) exp(-(t-t0)^2/2tau^2)``."""
        center = np.asarray(center, dtype=float)

        def spatial(x):
            d = x - center[:x.shape[0], None]
            return np.exp(-np.sum(d**2, axis=0) / (2 * width**2))

        def envelope(t):
            return 1.0 if np.isinf(duration) else np.exp(-(t - t_peak)**2 / (2 * duration**2))

        def rate(t, x):
            if np.isinf(duration):
                return np.zeros(x.shape[1])
            return amplitude * spatial(x) * envelope(t) * (-(t - t_peak) / duration**2)

        return cls(scalar=lambda t, x: amplitude * spatial(x) * envelope(t),
                   scalar_rate=rate, time_dependent=not np.isinf(duration),
                   label="gaussian_pulse")

    @classmethod
    def from_file(cls, path) -> "Potentials":
        """Static potentials from an ``.npz`` with arrays ``phi`` and/or ``A``."""
        with np.load(path) as data:
            phi = np.array(data["phi"], dtype=float) if "phi" in data else None
            a = np.array(data["A"], dtype=float) if "A" in data else None
        return cls(scalar=None if phi is None else (lambda t, x: phi),
                   vector=None if a is None else (lambda t, x: a),
                   label=f"file:{path}")


@dataclass(frozen=True)
class DiracMatrices:
    beta: np.ndarray
    alpha: np.ndarray  # shape (3, 4, 4)


_PAULI = np.array([[[0, 1], [1, 0]],
                   [[0, -1j], [1j, 0]],
                   [[1, 0], [0, -1]]], dtype=complex)


def dirac_matrices() -> DiracMatrices:
    """Standard (Dirac) representation: ``beta = diag(1,1,-1,-1)``, ``alpha^i = offdiag(s^i, s^i)``."""
    z = np.zeros((2, 2))
    beta = np.block([[np.eye(2), z], [z, -np.eye(2)]]).astype(complex)
    alpha = np.array([np.block([[z, s], [s, z]]) for s in _PAULI])
    return DiracMatrices(beta, alpha)


def kinetic_momenta(grid: Grid, params: PhysicalParams, a: np.ndarray) -> list[sparse.csr_matrix]:
    """``pi_i = p_i - (e/c) A_i`` for i = 0, 1, 2 (``p_i = 0`` beyond the grid dimension)."""
    out = []
    for i in range(3):
        m = sparse.diags(-(params.charge / params.c) * a[i], format="csr").astype(complex)
        if i < grid.dim:
            m = m + momentum_op(grid, i, params.hbar).sparse()
        out.append(sparse.csr_matrix(m))
    return out


def minimal_coupling_square(grid: Grid, params: PhysicalParams, a: np.ndarray) -> sparse.csr_matrix:
    """``(p - eA/c)^2`` expanded as ``p^2 - (e/c)(p.A + A.p) + (e/c)^2 A^2``.

    The symmetric ordering keeps the lattice operator Hermitian.
    """
    q = params.charge / params.c
    total = sparse.csr_matrix((grid.n_sites, grid.n_sites), dtype=complex)
    for i in range(3):
        ai = sparse.diags(a[i], format="csr")
        term = q**2 * (ai @ ai)
        if i < grid.dim:
            p = momentum_op(grid, i, params.hbar).sparse()
            term = term + p @ p - q * (p @ ai + ai @ p)
        total = total + term
    return sparse.csr_matrix(total)


def dirac_hamiltonian(grid: Grid, params: PhysicalParams,
                      potentials: Potentials | None = None) -> Hamiltonian:
    """``H_D = e phi 1_4 + c alpha.(p - eA/c) + m c^2 beta`` on 4-spinor fields."""
    potentials = potentials or Potentials.zero()
    dm = dirac_matrices()
    ns = grid.n_sites
    eye = sparse.identity(ns, format="csr")
    mass_term = sparse.kron(dm.beta, eye, format="csr") * params.rest_energy

    def operator_at(t):
        pis = kinetic_momenta(grid, params, potentials.a(grid, t))
        m = mass_term.astype(complex)
        for alpha, pi in zip(dm.alpha, pis):
            m = m + params.c * sparse.kron(alpha, pi, format="csr")
        if potentials.scalar is not None:
            phi = sparse.diags(params.charge * potentials.phi(grid, t))
            m = m + sparse.kron(np.eye(4), phi, format="csr")
        return LatticeOperator(sparse.csr_matrix(m), grid, 4, kind=HERMITIAN)

    operator_at(0.0)
    return Hamiltonian(operator_at, dim=4 * ns, fibre_dim=4, grid=grid, hbar=params.hbar,
                       time_dependent=potentials.time_dependent, kind=HERMITIAN, name="dirac")


def kg_equation(grid: Grid, params: PhysicalParams,
                potentials: Potentials | None = None) -> EquationSpec:
    """Klein-Gordon equation solved for the second time derivative.

    ``phi'' = f_0 phi + (2e/(i hbar)) varphi phi'`` with
    ``f_0 = -(c/hbar)^2 (p - eA/c)^2 - m^2c^4/hbar^2 + (e/hbar)^2 varphi^2
    + (2e/(i hbar)) dvarphi/dt``.
    """
    potentials = potentials or Potentials.zero()
    if params.charge != 0 and not potentials.has_rate:
        raise ValueError("kg_canonical needs dphi/dt of the scalar potential when charge != 0")
    hb, c, e = params.hbar, params.c, params.charge
    mass_term = (params.mass * c**2 / hb) ** 2

    def f0(t):
        phi = potentials.phi(grid, t)
        kin = minimal_coupling_square(grid, params, potentials.a(grid, t))
        diag = -mass_term + (e / hb) ** 2 * phi**2
        if e != 0:
            diag = diag + (2 * e / (1j * hb)) * potentials.phi_rate(grid, t)
        m = -(c / hb) ** 2 * kin + sparse.diags(diag.astype(complex))
        return LatticeOperator(sparse.csr_matrix(m), grid)

    def f1(t):
        phi = potentials.phi(grid, t)
        return multiplication_op(grid, (2 * e / (1j * hb)) * phi.astype(complex))

    if potentials.time_dependent:
        coeffs = (f0, f1)
    else:
        coeffs = (f0(0.0), f1(0.0))
    return EquationSpec(2, coeffs, 1, hb, grid, names=("f0", "f1"))


def _is_free(potentials: Potentials | None) -> bool:
    return potentials is None or potentials.vanishes


def kg_canonical(grid: Grid, params: PhysicalParams,
                 potentials: Potentials | None = None) -> Hamiltonian:
    """Companion Hamiltonian for ``psi = (phi, dphi/dt)``."""
    spec = kg_equation(grid, params, potentials)
    return Hamiltonian(lambda t: companion_hamiltonian(spec, t), dim=2 * grid.n_sites,
                       fibre_dim=2, grid=grid, hbar=params.hbar,
                       time_dependent=spec.time_dependent, name="kg_canonical")


def feshbach_villars_frame(params: PhysicalParams) -> np.ndarray:
    """Fibre matrix taking ``(phi, dphi/dt)`` to ``(phi + i hbar/mc^2 phi', phi - i hbar/mc^2 phi')``."""
    if params.mass <= 0:
        raise ValueError("the Feshbach-Villars split needs mass > 0")
    s = 1j * params.hbar / params.rest_energy
    return np.array([[1, s], [1, -s]])


def kg_feshbach_villars(grid: Grid, params: PhysicalParams,
                        potentials: Potentials | None = None) -> Hamiltonian:
    """Two-component Klein-Gordon Hamiltonian suited to the non-relativistic limit.

    With ``X = mc^2``, ``P = 2 e varphi`` and ``F = hbar^2 f_0 / mc^2``::

        H = 1/2 [[X + P - F, -X - P - F],
                 [X - P + F, -X + P + F]]

    In the free case it is pseudo-Hermitian with metric ``diag(1, -1)``.
    """
    if params.mass <= 0:
        raise ValueError("the Feshbach-Villars split needs mass > 0")
    spec = kg_equation(grid, params, potentials)
    potentials = potentials or Potentials.zero()
    ns = grid.n_sites
    rest = params.rest_energy

    def operator_at(t):
        f0 = spec.coefficient(0, t).sparse()
        big_f = (params.hbar**2 / rest) * f0
        x = rest * sparse.identity(ns, dtype=complex, format="csr")
        p = sparse.diags(2 * params.charge * potentials.phi(grid, t).astype(complex), format="csr")
        m = 0.5 * sparse.bmat([[x + p - big_f, -x - p - big_f],
                               [x - p + big_f, -x + p + big_f]], format="csr")
        return LatticeOperator(m, grid, 2)

    free = _is_free(potentials)
    return Hamiltonian(operator_at, dim=2 * ns, fibre_dim=2, grid=grid, hbar=params.hbar,
                       time_dependent=spec.time_dependent,
                       metric=(1.0, -1.0) if free else None, name="kg_feshbach_villars")


def kg_five_component(grid: Grid, params: PhysicalParams) -> Hamiltonian:
    """Free Klein-Gordon field as ``psi = (mc^2 phi, dphi/dt, grad phi)``.

    The generator follows from ``d(mc^2 phi)/dt = mc^2 phi'``,
    ``phi'' = c^2 div(grad phi) - (mc^2/hbar^2)(mc^2 phi)`` and
    ``d(grad phi)/dt = grad phi'``, with the same central differences used for
    ``p``, so the first component tracks the canonical reduction exactly.
    """
    if grid.dim != 3:
        raise ValueError(f"five-component Klein-Gordon needs a 3-d grid, got dim={grid.dim}")
    if params.mass <= 0:
        raise ValueError("five-component Klein-Gordon stores mc^2 phi and needs mass > 0")
    ns = grid.n_sites
    hb, c, rest = params.hbar, params.c, params.rest_energy
    eye = sparse.identity(ns, dtype=complex, format="csr")
    d = [central_difference(grid, a).astype(complex) for a in range(3)]
    blocks = [[None] * 5 for _ in range(5)]
    blocks[0][1] = rest * eye
    blocks[1][0] = -(rest / hb**2) * eye
    for a in range(3):
        blocks[1][2 + a] = c**2 * d[a]
        blocks[2 + a][1] = d[a]
    gen = sparse.bmat(blocks, format="csr")
    op = LatticeOperator(1j * hb * gen, grid, 5)
    return Hamiltonian(lambda t: op, dim=5 * ns, fibre_dim=5, grid=grid, hbar=hb,
                       name="kg_five_component")


def kg_five_state(grid: Grid, params: PhysicalParams, phi: np.ndarray, dphi: np.ndarray) -> np.ndarray:
    """Five-component state built from ``phi`` and ``dphi/dt`` site vectors."""
    grads = [central_difference(grid, a) @ phi for a in range(3)]
    return np.concatenate([params.rest_energy * phi, dphi, *grads]).astype(complex)


def maxwell_hamiltonian(grid: Grid, params: PhysicalParams) -> Hamiltonian:
    """``H = i hbar [[0, c curl], [-c curl, 0]]`` on ``(E, H)``; Hermitian on periodic grids."""
    if grid.dim != 3:
        raise ValueError(f"Maxwell needs a 3-d grid, got dim={grid.dim}")
    curl = curl_op(grid).sparse()
    m = 1j * params.hbar * params.c * sparse.bmat([[None, curl], [-curl, None]], format="csr")
    op = LatticeOperator(m, grid, 6, kind=HERMITIAN)
    return Hamiltonian(lambda t: op, dim=6 * grid.n_sites, fibre_dim=6, grid=grid,
                       hbar=params.hbar, kind=HERMITIAN, name="maxwell")


def maxwell_constraints(grid: Grid, state: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Divergences of E and H for a six-component state."""
    div = div_op(grid).sparse()
    n = 3 * grid.n_sites
    state = np.asarray(state)
    if state.shape != (2 * n,):
        raise ValueError(f"Maxwell state must have length {2 * n}")
    return div @ state[:n], div @ state[n:]


def maxwell_energy(grid: Grid, state: np.ndarray) -> float:
    """``1/2 sum (|E|^2 + |H|^2) dV``."""
    return 0.5 * grid.cell_volume * float(np.vdot(state, state).real)


_KG_REDUCTIONS = {"canonical": kg_canonical, "feshbach_villars": kg_feshbach_villars}


def spin1_block(grid: Grid, params: PhysicalParams, potentials: Potentials | None = None,
                reduction: str = "canonical") -> Hamiltonian:
    """``diag(H_0, H_1, H_2, H_3)``, one Klein-Gordon block per 4-vector component."""
    try:
        build = _KG_REDUCTIONS[reduction]
    except KeyError:
        raise ValueError(f"unknown Klein-Gordon reduction {reduction!r}") from None
    block = build(grid, params, potentials)
    per = block.fibre_dim

    def operator_at(t):
        m = block.matrix(t)
        return LatticeOperator(sparse.block_diag([m] * 4, format="csr"), grid, 4 * per)

    metric = None if block.metric is None else np.tile(block.metric, 4)
    return Hamiltonian(operator_at, dim=4 * block.dim, fibre_dim=4 * per, grid=grid,
                       hbar=params.hbar, time_dependent=block.time_dependent,
                       metric=metric, name=f"spin1_{reduction}")


MODELS = {
    "dirac": dirac_hamiltonian,
    "kg_canonical": kg_canonical,
    "kg_feshbach_villars": kg_feshbach_villars,
    "kg_five_component": lambda grid, params, potentials=None: kg_five_component(grid, params),
    "maxwell": lambda grid, params, potentials=None: maxwell_hamiltonian(grid, params),
    "spin1": spin1_block,
}


def build_model(name: str, grid: Grid, params: PhysicalParams,
                potentials: Potentials | None = None) -> Hamiltonian:
    try:
        build = MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
    if name in ("kg_five_component", "maxwell") and not _is_free(potentials):
        raise ValueError(f"{name} is implemented for the free field only")
    return build(grid, params, potentials)
