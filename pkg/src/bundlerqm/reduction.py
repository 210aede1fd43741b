"""Companion-form reduction of n-th order linear equations and frame changes.

An equation ``d^n phi/dt^n = f_0(t) phi + ... + f_{n-1}(t) d^{n-1}phi/dt^{n-1}``
becomes ``i hbar dpsi/dt = H(t) psi`` for the stacked state
``psi = (phi, dphi/dt, ..., d^{n-1}phi/dt^{n-1})`` with

    H(t) = i hbar [[0, 1, 0, ...], ..., [0, ..., 0, 1], [f_0, f_1, ..., f_{n-1}]].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
from scipy import sparse

from .lattice import GENERAL, HERMITIAN, Grid, LatticeOperator

Coefficient = Union[LatticeOperator, Callable[[float], LatticeOperator]]
MatrixFunction = Union[np.ndarray, Callable[[float], np.ndarray]]


@dataclass(frozen=True)
class EquationSpec:
    """Linear equation of order ``order`` solved for its highest time derivative.

    ``coefficients[i]`` multiplies the i-th derivative; each is either a
    :class:`LatticeOperator` on the component space or a callable of ``t``
    returning one.
    """

    order: int
    coefficients: tuple[Coefficient, ...]
    component_dim: int = 1
    hbar: float = 1.0
    grid: Grid | None = None
    names: tuple[str, ...] = ()

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 1:
            raise ValueError(f"order must be a positive integer, got {self.order}")
        if len(self.coefficients) != self.order:
            raise ValueError(f"expected {self.order} coefficients, got {len(self.coefficients)}")
        if self.component_dim < 1:
            raise ValueError("component_dim must be >= 1")
        if not self.hbar > 0:
            raise ValueError("hbar must be positive")
        for c in self.coefficients:
            if isinstance(c, LatticeOperator):
                self._check(c, "coefficient")
        if self.names and len(self.names) != self.order:
            raise ValueError("one name per coefficient")

    @property
    def time_dependent(self) -> bool:
        return any(not isinstance(c, LatticeOperator) for c in self.coefficients)

    @property
    def block_size(self) -> int:
        sites = 1 if self.grid is None else self.grid.n_sites
        return self.component_dim * sites

    def _check(self, op: LatticeOperator, label: str):
        if op.grid != self.grid:
            raise ValueError(f"{label} is defined on a different grid")
        if op.shape != (self.block_size, self.block_size):
            raise ValueError(f"{label} has shape {op.shape}, expected {(self.block_size,) * 2}")

    def coefficient(self, i: int, t: float) -> LatticeOperator:
        c = self.coefficients[i]
        op = c if isinstance(c, LatticeOperator) else c(t)
        self._check(op, f"f_{i}(t={t})")
        data = op.matrix.data if sparse.issparse(op.matrix) else np.asarray(op.matrix)
        if not np.all(np.isfinite(data)):
            raise ValueError(f"f_{i} is not finite at t={t}")
        return op


@dataclass(frozen=True)
class CompanionState:
    blocks: tuple[np.ndarray, ...]
    time: float = 0.0

    @property
    def order(self) -> int:
        return len(self.blocks)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate(self.blocks)

    @classmethod
    def from_vector(cls, vector: np.ndarray, order: int, time: float = 0.0) -> "CompanionState":
        vector = np.asarray(vector)
        if vector.ndim != 1 or vector.size % order:
            raise ValueError(f"vector of length {vector.size} cannot hold {order} blocks")
        return cls(tuple(np.split(vector, order)), time)


def companion_pack(derivatives: Sequence[np.ndarray], time: float = 0.0) -> CompanionState:
    """Stack ``(phi, dphi/dt, ...)`` in ascending derivative order."""
    if not derivatives:
        raise ValueError("need at least one field")
    blocks = tuple(np.asarray(d) for d in derivatives)
    shape = blocks[0].shape
    for d in blocks[1:]:
        if d.shape != shape:
            raise ValueError(f"shape mismatch: {d.shape} vs {shape}")
    return CompanionState(blocks, time)


def companion_unpack(state: CompanionState, k: int) -> np.ndarray:
    if not 0 <= k < state.order:
        raise IndexError(f"component index out of range: {k} not in [0, {state.order})")
    return state.blocks[k]


class Hamiltonian:
    """Time-dependent generator of ``i hbar dpsi/dt = H(t) psi``.

    ``operator_at(t)`` returns a :class:`LatticeOperator` over the full state
    space.  ``metric`` is an optional diagonal +-1 signature per fibre
    component declaring ``eta H = H^dagger eta``.
    """

    def __init__(self, operator_at: Callable[[float], LatticeOperator], *,
                 dim: int, fibre_dim: int = 1, grid: Grid | None = None,
                 hbar: float = 1.0, time_dependent: bool = False,
                 kind: str = GENERAL, metric: Sequence[float] | None = None,
                 name: str = ""):
        if not hbar > 0:
            raise ValueError("hbar must be positive")
        self._operator_at = operator_at
        self.dim = int(dim)
        self.fibre_dim = int(fibre_dim)
        self.grid = grid
        self.hbar = float(hbar)
        self.time_dependent = bool(time_dependent)
        self.kind = kind
        self.metric = None if metric is None else np.asarray(metric, dtype=float)
        if self.metric is not None and self.metric.shape != (self.fibre_dim,):
            raise ValueError("metric needs one sign per fibre component")
        self.name = name
        self._constant: LatticeOperator | None = None

    @classmethod
    def constant(cls, matrix, hbar: float = 1.0, **kwargs) -> "Hamiltonian":
        """Wrap a fixed matrix (no grid); kind is detected when not given."""
        if isinstance(matrix, LatticeOperator):
            op = matrix
        else:
            dense = not sparse.issparse(matrix)
            m = np.asarray(matrix, dtype=complex) if dense else sparse.csr_matrix(matrix, dtype=complex)
            op = LatticeOperator(m, None, m.shape[0], representation="dense" if dense else "stencil")
            if "kind" not in kwargs and op.is_hermitian(1e-14):
                kwargs["kind"] = HERMITIAN
        grid = op.grid
        fibre = op.fibre_dim
        return cls(lambda t: op, dim=op.shape[0], fibre_dim=fibre, grid=grid,
                   hbar=hbar, **kwargs)

    def evaluate(self, t: float) -> LatticeOperator:
        if not self.time_dependent:
            if self._constant is None:
                self._constant = self._checked(self._operator_at(0.0))
            return self._constant
        return self._checked(self._operator_at(float(t)))

    def _checked(self, op: LatticeOperator) -> LatticeOperator:
        if op.shape != (self.dim, self.dim):
            raise ValueError(f"Hamiltonian evaluated to shape {op.shape}, expected {self.dim}")
        return op

    def matrix(self, t: float):
        return self.evaluate(t).matrix

    def metric_matrix(self) -> sparse.csr_matrix:
        if self.metric is None:
            raise ValueError(f"{self.name or 'Hamiltonian'} declares no metric")
        sites = 1 if self.grid is None else self.grid.n_sites
        return sparse.diags(np.repeat(self.metric, sites), format="csr")

    def pseudo_hermiticity_error(self, t: float = 0.0) -> float:
        """``max |eta H - H^dagger eta|`` relative to ``max |H|``."""
        eta = self.metric_matrix()
        h = sparse.csr_matrix(self.matrix(t))
        diff = eta @ h - h.conj().T @ eta
        scale = max(np.abs(h.data).max() if h.nnz else 0.0, 1.0)
        return (np.abs(diff.data).max() if diff.nnz else 0.0) / scale

    def __repr__(self):
        return f"Hamiltonian({self.name or '?'}, dim={self.dim}, fibre={self.fibre_dim})"


def companion_hamiltonian(spec: EquationSpec, t: float) -> LatticeOperator:
    """Companion matrix ``i hbar [[0, 1, ...], ..., [f_0 ... f_{n-1}]]`` at time ``t``."""
    n = spec.order
    fibre = n * spec.component_dim
    ih = 1j * spec.hbar
    coeffs = [spec.coefficient(i, t) for i in range(n)]
    if n == 1:
        return LatticeOperator(ih * coeffs[0].sparse(), spec.grid, fibre)
    size = spec.block_size
    eye = sparse.identity(size, dtype=complex, format="csr")
    blocks = [[None] * n for _ in range(n)]
    for i in range(n - 1):
        blocks[i][i + 1] = eye
    for i, f in enumerate(coeffs):
        blocks[n - 1][i] = f.sparse()
    m = sparse.bmat(blocks, format="csr")
    return LatticeOperator(ih * m, spec.grid, fibre)


def companion_system(spec: EquationSpec, name: str = "companion") -> Hamiltonian:
    return Hamiltonian(lambda t: companion_hamiltonian(spec, t),
                       dim=spec.order * spec.block_size,
                       fibre_dim=spec.order * spec.component_dim, grid=spec.grid,
                       hbar=spec.hbar, time_dependent=spec.time_dependent, name=name)


def central_derivative(f: Callable[[float], np.ndarray], t: float, eps: float = 1e-5) -> np.ndarray:
    return (np.asarray(f(t + eps)) - np.asarray(f(t - eps))) / (2 * eps)


def _at(value: MatrixFunction, t: float) -> np.ndarray:
    return np.asarray(value(t) if callable(value) else value)


def _expand(a: np.ndarray, dim: int):
    """Fibre-sized matrix -> full-space matrix (component-major kron)."""
    if a.shape == (dim, dim):
        return a
    k = a.shape[0]
    if a.shape != (k, k) or dim % k:
        raise ValueError(f"frame matrix of shape {a.shape} does not fit dimension {dim}")
    return sparse.kron(sparse.csr_matrix(a), sparse.identity(dim // k), format="csr")


def frame_change(H: Hamiltonian, A: MatrixFunction, dA_dt: MatrixFunction | None,
                 t: float, *, eps: float = 1e-5, cond_max: float = 1e8) -> LatticeOperator:
    """Hamiltonian seen by ``psi~ = A(t) psi``.

    ``H~ = A H A^-1 + i hbar (dA/dt) A^-1``.  ``A`` may be full-size or act on
    the fibre only (then it is applied identically at every site).  When
    ``dA_dt`` is None it is obtained by central differencing with step ``eps``.
    """
    a = _at(A, t)
    if dA_dt is None:
        if not callable(A):
            da = np.zeros_like(a)
        else:
            da = central_derivative(A, t, eps)
    else:
        da = _at(dA_dt, t)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("frame matrix must be square")
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > cond_max:
        raise np.linalg.LinAlgError(f"frame matrix singular or ill-conditioned (cond={cond:.3g})")
    a_inv = np.linalg.inv(a)
    h = H.evaluate(t)
    full, full_inv, full_da = (_expand(x, H.dim) for x in (a, a_inv, da))
    new = full @ h.matrix @ full_inv + 1j * H.hbar * (full_da @ full_inv)
    if sparse.issparse(new):
        new = sparse.csr_matrix(new)
        rep = "stencil"
    else:
        new = np.asarray(new)
        rep = "dense"
    return LatticeOperator(new, h.grid, h.fibre_in, representation=rep)


def frame_changed(H: Hamiltonian, A: MatrixFunction, dA_dt: MatrixFunction | None = None,
                  *, eps: float = 1e-5, name: str | None = None) -> Hamiltonian:
    """Time-dependent Hamiltonian obtained from :func:`frame_change` at each ``t``."""
    moving = callable(A)
    return Hamiltonian(lambda t: frame_change(H, A, dA_dt, t, eps=eps),
                       dim=H.dim, fibre_dim=H.fibre_dim, grid=H.grid, hbar=H.hbar,
                       time_dependent=H.time_dependent or moving,
                       name=name or f"{H.name}~")
