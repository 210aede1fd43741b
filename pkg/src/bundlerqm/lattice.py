"""Periodic lattices and central-difference operators.

Every operator here is a circulant (per axis) sparse matrix, so it is exactly
diagonal in the discrete Fourier basis.  Site ordering is row-major with
axis 0 fastest: ``site = i0 + N0*(i1 + N1*i2)``.  Multi-component fields are
stored component-major: ``index = component * n_sites + site``.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np
from scipy import sparse

HERMITIAN = "hermitian"
ANTI_HERMITIAN = "anti-hermitian"
GENERAL = "general"
_KINDS = (HERMITIAN, ANTI_HERMITIAN, GENERAL)


@dataclass(frozen=True)
class Grid:
    """Periodic box with ``shape[a]`` points of spacing ``lengths[a]/shape[a]``."""

    shape: tuple[int, ...]
    lengths: tuple[float, ...]

    def __post_init__(self):
        if not 1 <= len(self.shape) <= 3:
            raise ValueError(f"dim must be 1, 2 or 3, got {len(self.shape)}")
        if len(self.lengths) != len(self.shape):
            raise ValueError("one length per axis required")
        for n in self.shape:
            if int(n) != n or n < 4 or n % 2:
                raise ValueError(f"points must be even and >= 4, got {n}")
        for length in self.lengths:
            if not np.isfinite(length) or length <= 0:
                raise ValueError(f"lengths must be positive, got {length}")

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.lengths, self.shape))

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def site_index(self, index: Sequence[int]) -> int:
        site, stride = 0, 1
        for i, n in zip(index, self.shape):
            site += (i % n) * stride
            stride *= n
        return site

    def to_field(self, values: np.ndarray) -> np.ndarray:
        """Reshape a flat site vector into an array of shape ``self.shape``."""
        return np.reshape(values, self.shape, order="F")

    def flatten(self, field: np.ndarray) -> np.ndarray:
        return np.reshape(field, -1, order="F")

    def coordinates(self) -> np.ndarray:
        """Site coordinates, shape ``(dim, n_sites)``; the origin is site 0."""
        axes = [np.arange(n) * h for n, h in zip(self.shape, self.spacing)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([self.flatten(m) for m in mesh])

    def modes(self):
        """All mode index tuples in FFT order."""
        return product(*(range(n) for n in self.shape))

    def wavenumber(self, mode: Sequence[int]) -> np.ndarray:
        """Continuum wavenumber ``2*pi*m/L`` with ``m`` folded into (-N/2, N/2]."""
        k = []
        for m, n, L in zip(mode, self.shape, self.lengths):
            m = int(m) % n
            if m > n // 2:
                m -= n
            k.append(2 * np.pi * m / L)
        return np.array(k)

    def discrete_momentum(self, mode: Sequence[int]) -> np.ndarray:
        """Central-difference dispersion variable ``sin(k*h)/h`` per axis."""
        h = np.array(self.spacing)
        return np.sin(self.wavenumber(mode) * h) / h

    def plane_wave(self, mode: Sequence[int]) -> np.ndarray:
        k = self.wavenumber(mode)
        return np.exp(1j * (k @ self.coordinates()))


def make_grid(dim: int, points_per_axis, length_per_axis) -> Grid:
    """Build a :class:`Grid`; scalar arguments are repeated over the axes.

    >>> make_grid(1, 8, 2 * np.pi).spacing
    (0.7853981633974483,)
    """
    if dim not in (1, 2, 3):
        raise ValueError(f"dim must be 1, 2 or 3, got {dim}")
    points = np.broadcast_to(np.asarray(points_per_axis), (dim,))
    lengths = np.broadcast_to(np.asarray(length_per_axis, dtype=float), (dim,))
    for n in points:
        if int(n) != n or n < 4 or n % 2:
            raise ValueError(f"points must be even and >= 4, got {n}")
    return Grid(tuple(int(n) for n in points), tuple(float(L) for L in lengths))


@dataclass(frozen=True, eq=False)
class LatticeOperator:
    """Linear map between multi-component grid functions.

    ``matrix`` has shape ``(fibre_out*n_sites, fibre_in*n_sites)``; with no
    grid the operator is a plain matrix on ``C^fibre``.
    """

    matrix: sparse.spmatrix | np.ndarray
    grid: Grid | None = None
    fibre_in: int = 1
    fibre_out: int | None = None
    kind: str = GENERAL
    representation: str = "stencil"

    def __post_init__(self):
        if self.fibre_out is None:
            object.__setattr__(self, "fibre_out", self.fibre_in)
        if self.kind not in _KINDS:
            raise ValueError(f"unknown hermiticity flag {self.kind!r}")
        if self.representation not in ("stencil", "dense"):
            raise ValueError(f"unknown representation {self.representation!r}")
        sites = 1 if self.grid is None else self.grid.n_sites
        expected = (self.fibre_out * sites, self.fibre_in * sites)
        if self.matrix.shape != expected:
            raise ValueError(f"matrix shape {self.matrix.shape} != {expected}")
        if self.kind == HERMITIAN and not self.is_hermitian(1e-10):
            raise ValueError("operator flagged hermitian is not")

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def fibre_dim(self) -> int:
        if self.fibre_in != self.fibre_out:
            raise ValueError("operator is not square in the fibre")
        return self.fibre_in

    @property
    def n_sites(self) -> int:
        return 1 if self.grid is None else self.grid.n_sites

    def apply(self, values: np.ndarray) -> np.ndarray:
        return self.matrix @ values

    def dense(self) -> np.ndarray:
        if sparse.issparse(self.matrix):
            return self.matrix.toarray()
        return np.asarray(self.matrix)

    def sparse(self) -> sparse.csr_matrix:
        return sparse.csr_matrix(self.matrix)

    def adjoint(self) -> "LatticeOperator":
        return self._derive(self.matrix.conj().T, fibre_in=self.fibre_out,
                            fibre_out=self.fibre_in, kind=self.kind)

    def hermiticity_error(self) -> float:
        diff = self.matrix - self.matrix.conj().T
        return _max_abs(diff)

    def is_hermitian(self, rtol: float = 1e-12) -> bool:
        scale = max(_max_abs(self.matrix), 1.0)
        return self.hermiticity_error() <= rtol * scale

    def _derive(self, matrix, kind=GENERAL, fibre_in=None, fibre_out=None):
        rep = "stencil" if sparse.issparse(matrix) else "dense"
        return LatticeOperator(matrix, self.grid,
                               self.fibre_in if fibre_in is None else fibre_in,
                               self.fibre_out if fibre_out is None else fibre_out,
                               kind, rep)

    def _check_compatible(self, other: "LatticeOperator"):
        if other.grid != self.grid:
            raise ValueError("operators live on different grids")

    def __add__(self, other):
        if not isinstance(other, LatticeOperator):
            return NotImplemented
        self._check_compatible(other)
        kind = self.kind if self.kind == other.kind else GENERAL
        return self._derive(self.matrix + other.matrix, kind)

    def __sub__(self, other):
        if not isinstance(other, LatticeOperator):
            return NotImplemented
        self._check_compatible(other)
        kind = self.kind if self.kind == other.kind else GENERAL
        return self._derive(self.matrix - other.matrix, kind)

    def __neg__(self):
        return self._derive(-self.matrix, self.kind)

    def __mul__(self, other):
        if isinstance(other, LatticeOperator):
            return self @ other
        if np.ndim(other) != 0:
            return NotImplemented
        other = complex(other)
        if other.imag == 0:
            kind = self.kind
        elif other.real == 0 and self.kind != GENERAL:
            kind = ANTI_HERMITIAN if self.kind == HERMITIAN else HERMITIAN
        else:
            kind = GENERAL
        scalar = other.real if other.imag == 0 else other
        return self._derive(scalar * self.matrix, kind)

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, LatticeOperator):
            self._check_compatible(other)
            if other.fibre_out != self.fibre_in:
                raise ValueError("fibre dimensions do not chain")
            return self._derive(self.matrix @ other.matrix,
                                fibre_in=other.fibre_in, fibre_out=self.fibre_out)
        return self.apply(other)


def _max_abs(m) -> float:
    if sparse.issparse(m):
        m = sparse.csr_matrix(m)
        return float(np.max(np.abs(m.data))) if m.nnz else 0.0
    m = np.asarray(m)
    return float(np.max(np.abs(m))) if m.size else 0.0


def _axis_operator(grid: Grid, axis: int, block: sparse.spmatrix) -> sparse.csr_matrix:
    """Embed a 1-D operator on ``axis`` into the full lattice (axis 0 fastest)."""
    out = None
    for a in reversed(range(grid.dim)):
        factor = block if a == axis else sparse.identity(grid.shape[a], format="csr")
        out = factor if out is None else sparse.kron(out, factor, format="csr")
    return sparse.csr_matrix(out)


def shift_matrix(grid: Grid, axis: int, offset: int) -> sparse.csr_matrix:
    """Periodic shift ``(S f)(j) = f(j + offset)`` along ``axis``."""
    _check_axis(grid, axis)
    n = grid.shape[axis]
    rows = np.arange(n)
    block = sparse.csr_matrix((np.ones(n), (rows, (rows + offset) % n)), shape=(n, n))
    return _axis_operator(grid, axis, block)


def _check_axis(grid: Grid, axis: int):
    if not 0 <= axis < grid.dim:
        raise ValueError(f"axis {axis} out of range for a {grid.dim}-d grid")


def central_difference(grid: Grid, axis: int) -> sparse.csr_matrix:
    """Real antisymmetric stencil ``(f(j+1) - f(j-1)) / (2h)``."""
    h = grid.spacing[axis]
    return sparse.csr_matrix((shift_matrix(grid, axis, 1) - shift_matrix(grid, axis, -1)) / (2 * h))


def identity_op(grid: Grid | None, fibre: int = 1) -> LatticeOperator:
    sites = 1 if grid is None else grid.n_sites
    return LatticeOperator(sparse.identity(fibre * sites, dtype=complex, format="csr"),
                           grid, fibre, kind=HERMITIAN)


def multiplication_op(grid: Grid, values: np.ndarray) -> LatticeOperator:
    """Pointwise multiplication by a scalar field (flat site vector)."""
    values = np.asarray(values)
    if values.shape != (grid.n_sites,):
        raise ValueError(f"field has shape {values.shape}, grid has {grid.n_sites} sites")
    if not np.all(np.isfinite(values)):
        raise ValueError("multiplier field is not finite")
    kind = HERMITIAN if np.isrealobj(values) or not np.any(values.imag) else GENERAL
    return LatticeOperator(sparse.diags(values, format="csr"), grid, 1, kind=kind)


def momentum_op(grid: Grid, axis: int, hbar: float = 1.0) -> LatticeOperator:
    """``p = -i*hbar*d/dx`` along ``axis`` with the two-point central stencil.

    A plane wave ``exp(i k x)`` is an exact eigenvector with eigenvalue
    ``hbar * sin(k h) / h``.
    """
    _check_axis(grid, axis)
    return LatticeOperator(-1j * hbar * central_difference(grid, axis), grid, 1, kind=HERMITIAN)


def laplacian_op(grid: Grid, stencil: str = "compact") -> LatticeOperator:
    """Periodic Laplacian.

    ``compact`` is the three-point stencil with symbol ``-(2/h^2)(1 - cos kh)``;
    ``wide`` is the square of the central difference, symbol ``-(sin kh / h)^2``,
    which is the one consistent with ``p.p`` and is what the models use.
    """
    total = sparse.csr_matrix((grid.n_sites, grid.n_sites))
    for a in range(grid.dim):
        if stencil == "compact":
            h = grid.spacing[a]
            term = (shift_matrix(grid, a, 1) + shift_matrix(grid, a, -1)
                    - 2 * sparse.identity(grid.n_sites)) / h**2
        elif stencil == "wide":
            d = central_difference(grid, a)
            term = d @ d
        else:
            raise ValueError(f"unknown stencil {stencil!r}")
        total = total + term
    return LatticeOperator(sparse.csr_matrix(total, dtype=complex), grid, 1, kind=HERMITIAN)


def _require_3d(grid: Grid, what: str):
    if grid.dim != 3:
        raise ValueError(f"{what} requires a 3-d grid, got dim={grid.dim}")


def gradient_op(grid: Grid) -> LatticeOperator:
    """Scalar field -> vector field of central differences (one per axis)."""
    blocks = [[central_difference(grid, a)] for a in range(grid.dim)]
    return LatticeOperator(sparse.bmat(blocks, format="csr").astype(complex),
                           grid, 1, grid.dim)


def curl_op(grid: Grid) -> LatticeOperator:
    """Central-difference curl on 3-vector fields; real symmetric, hence Hermitian."""
    _require_3d(grid, "curl")
    d0, d1, d2 = (central_difference(grid, a) for a in range(3))
    blocks = [[None, -d2, d1],
              [d2, None, -d0],
              [-d1, d0, None]]
    return LatticeOperator(sparse.bmat(blocks, format="csr").astype(complex),
                           grid, 3, kind=HERMITIAN)


def div_op(grid: Grid) -> LatticeOperator:
    _require_3d(grid, "div")
    blocks = [[central_difference(grid, a) for a in range(3)]]
    return LatticeOperator(sparse.bmat(blocks, format="csr").astype(complex), grid, 3, 1)


def fibre_embed(op: LatticeOperator, fibre_matrix: np.ndarray) -> LatticeOperator:
    """``fibre_matrix (x) op`` for a scalar operator ``op``."""
    fibre_matrix = np.asarray(fibre_matrix)
    m = sparse.kron(sparse.csr_matrix(fibre_matrix), op.sparse(), format="csr")
    return LatticeOperator(m, op.grid, fibre_matrix.shape[1], fibre_matrix.shape[0])


def is_translation_invariant(op: LatticeOperator, rtol: float = 1e-12) -> bool:
    """True when ``op`` commutes with unit shifts along every axis."""
    if op.grid is None:
        return True
    if op.fibre_in != op.fibre_out:
        raise ValueError("translation check needs a fibre-square operator")
    m = op.sparse()
    scale = max(_max_abs(m), 1.0)
    for a in range(op.grid.dim):
        s = sparse.kron(sparse.identity(op.fibre_in), shift_matrix(op.grid, a, 1), format="csr")
        if _max_abs(s @ m - m @ s) > rtol * scale:
            return False
    return True


def fourier_symbol(op: LatticeOperator) -> np.ndarray:
    """Per-mode fibre matrices of a translation-invariant operator.

    Returns an array of shape ``grid.shape + (fibre_out, fibre_in)`` whose entry
    at mode ``m`` is the matrix acting on ``exp(i k_m x)`` times a fibre vector.
    Obtained from the FFT of the operator's response to a delta at site 0.
    """
    grid = op.grid
    if grid is None:
        raise ValueError("operator has no grid")
    ns = grid.n_sites
    m = op.sparse().tocsc()
    symbol = np.empty(grid.shape + (op.fibre_out, op.fibre_in), dtype=complex)
    for b in range(op.fibre_in):
        column = m[:, b * ns].toarray().ravel()
        for a in range(op.fibre_out):
            field = grid.to_field(column[a * ns:(a + 1) * ns])
            symbol[..., a, b] = np.fft.fftn(field)
    return symbol


def to_modes(grid: Grid, state: np.ndarray, fibre: int) -> np.ndarray:
    """Component-major state -> Fourier coefficients, shape ``grid.shape + (fibre,)``."""
    comps = np.reshape(state, (fibre, grid.n_sites))
    out = np.empty(grid.shape + (fibre,), dtype=complex)
    for a in range(fibre):
        out[..., a] = np.fft.fftn(grid.to_field(comps[a]))
    return out


def from_modes(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    fibre = coeffs.shape[-1]
    return np.concatenate([grid.flatten(np.fft.ifftn(coeffs[..., a])) for a in range(fibre)])
