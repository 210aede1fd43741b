"""Time stepping and the evolution operator ``U(t, s)``.

Crank-Nicolson is the Cayley transform of the midpoint Hamiltonian,

    (1 + i dt H(t + dt/2) / 2hbar) psi' = (1 - i dt H(t + dt/2) / 2hbar) psi,

which is exactly unitary for Hermitian ``H`` and exactly eta-unitary for
eta-pseudo-Hermitian ``H``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
from scipy import sparse
from scipy.sparse.linalg import splu

from .lattice import from_modes, fourier_symbol, is_translation_invariant, to_modes
from .reduction import Hamiltonian

METHODS = ("crank_nicolson", "exact_per_mode", "explicit_midpoint")
DENSE_LIMIT = 512
DEFAULT_MAX_DIM = 4096


class SingularStepError(np.linalg.LinAlgError):
    """The implicit step matrix could not be factorized."""


class _Factor:
    """LU factorization of a square matrix, dense or sparse by size."""

    def __init__(self, m):
        n = m.shape[0]
        try:
            if sparse.issparse(m) and n > DENSE_LIMIT:
                self._lu = splu(sparse.csc_matrix(m))
                self._dense = False
            else:
                dense = m.toarray() if sparse.issparse(m) else np.asarray(m)
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", sla.LinAlgWarning)
                    lu, piv = sla.lu_factor(dense, check_finite=True)
                pivots = np.abs(np.diag(lu))
                if not np.all(pivots > np.finfo(float).eps * max(pivots.max(), 1.0)):
                    raise SingularStepError("step matrix is singular")
                self._lu = (lu, piv)
                self._dense = True
        except RuntimeError as exc:  # splu: "Factor is exactly singular"
            raise SingularStepError(str(exc)) from exc
        except ValueError as exc:
            raise SingularStepError(f"step matrix not finite: {exc}") from exc

    def solve(self, b: np.ndarray) -> np.ndarray:
        if self._dense:
            return sla.lu_solve(self._lu, b, check_finite=False)
        return self._lu.solve(np.asarray(b, dtype=complex))


class _StepAction:
    """Forward and backward action of one time step."""

    def forward(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class _Identity(_StepAction):
    def forward(self, v):
        return np.array(v, dtype=complex, copy=True)

    backward = forward


class _Cayley(_StepAction):
    def __init__(self, h, dt: float, hbar: float):
        a = 0.5j * dt / hbar
        if sparse.issparse(h):
            eye = sparse.identity(h.shape[0], dtype=complex, format="csc")
            h = sparse.csc_matrix(h)
        else:
            eye = np.eye(h.shape[0], dtype=complex)
        self._plus = eye + a * h
        self._minus = eye - a * h

    @cached_property
    def _lu_plus(self):
        return _Factor(self._plus)

    @cached_property
    def _lu_minus(self):
        return _Factor(self._minus)

    def forward(self, v):
        return self._lu_plus.solve(self._minus @ v)

    def backward(self, v):
        return self._lu_minus.solve(self._plus @ v)


class _DenseExponential(_StepAction):
    def __init__(self, h, dt: float, hbar: float):
        h = h.toarray() if sparse.issparse(h) else np.asarray(h)
        self._u = sla.expm(-1j * dt / hbar * h)
        self._u_inv = sla.expm(1j * dt / hbar * h)

    def forward(self, v):
        return self._u @ v

    def backward(self, v):
        return self._u_inv @ v


class _ModeExponential(_StepAction):
    """Exact step for translation-invariant lattice Hamiltonians via FFT."""

    def __init__(self, op, dt: float, hbar: float):
        if not is_translation_invariant(op):
            raise ValueError("exact_per_mode requires a translation-invariant Hamiltonian")
        self._grid = op.grid
        self._fibre = op.fibre_dim
        symbol = fourier_symbol(op)
        self._u = sla.expm(-1j * dt / hbar * symbol)
        self._u_inv = sla.expm(1j * dt / hbar * symbol)

    def _apply(self, u, v):
        if v.ndim == 2:
            return np.stack([self._apply(u, col) for col in v.T], axis=1)
        coeffs = to_modes(self._grid, v, self._fibre)
        return from_modes(self._grid, np.einsum("...ab,...b->...a", u, coeffs))

    def forward(self, v):
        return self._apply(self._u, v)

    def backward(self, v):
        return self._apply(self._u_inv, v)


class _Midpoint(_StepAction):
    """Explicit second-order midpoint rule; not unitary, diagnostics only."""

    def __init__(self, h0, h_mid, dt: float, hbar: float):
        self._h0, self._hm, self._c = h0, h_mid, -1j * dt / hbar

    def forward(self, v):
        half = v + 0.5 * self._c * (self._h0 @ v)
        return v + self._c * (self._hm @ half)

    def backward(self, v):
        raise NotImplementedError("explicit_midpoint steps are not invertible here")


def _is_zero(m) -> bool:
    if sparse.issparse(m):
        return sparse.csr_matrix(m).count_nonzero() == 0
    return not np.any(m)


class StepFactory:
    """Builds step actions for one Hamiltonian, caching them when ``H`` is constant."""

    def __init__(self, H: Hamiltonian, method: str = "crank_nicolson"):
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
        self.H = H
        self.method = method
        self._cache: dict[float, _StepAction] = {}

    def action(self, t: float, dt: float) -> _StepAction:
        if dt == 0:
            raise ValueError("dt must be nonzero")
        if not self.H.time_dependent:
            key = float(dt)
            if key not in self._cache:
                self._cache[key] = self._build(t, dt)
            return self._cache[key]
        return self._build(t, dt)

    def _build(self, t: float, dt: float) -> _StepAction:
        H = self.H
        mid = H.evaluate(t + 0.5 * dt)
        if self.method == "explicit_midpoint":
            return _Midpoint(H.matrix(t), mid.matrix, dt, H.hbar)
        if _is_zero(mid.matrix):
            return _Identity()
        if self.method == "crank_nicolson":
            return _Cayley(mid.matrix, dt, H.hbar)
        if H.grid is None:
            return _DenseExponential(mid.matrix, dt, H.hbar)
        return _ModeExponential(mid, dt, H.hbar)


def step(H: Hamiltonian, psi: np.ndarray, t: float, dt: float,
         method: str = "crank_nicolson") -> np.ndarray:
    """Advance ``psi`` from ``t`` to ``t + dt``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    return StepFactory(H, method).action(t, dt).forward(np.asarray(psi, dtype=complex))


@dataclass(frozen=True)
class Segment:
    t_start: float
    t_end: float
    action: _StepAction

    def forward(self, v):
        return self.action.forward(v)

    def backward(self, v):
        return self.action.backward(v)


class Propagator:
    """``U(t, s)`` as an ordered product of step segments.

    Segments must be contiguous.  ``apply``/``matrix`` accept any pair of
    segment boundaries; for ``t < s`` the inverse steps are used.
    """

    def __init__(self, segments: Sequence[Segment], hbar: float = 1.0,
                 t_start: float | None = None, dim: int | None = None):
        segments = tuple(segments)
        for a, b in zip(segments, segments[1:]):
            if not math.isclose(a.t_end, b.t_start, rel_tol=1e-12, abs_tol=1e-12):
                raise ValueError(f"segments not contiguous at t={a.t_end} / {b.t_start}")
        if not segments and t_start is None:
            raise ValueError("an empty propagator needs t_start")
        self.segments = segments
        self.hbar = hbar
        self.dim = dim
        self._t0 = segments[0].t_start if segments else float(t_start)

    @classmethod
    def uniform(cls, H: Hamiltonian, t0: float, t1: float, n_steps: int,
                method: str = "crank_nicolson", factory: StepFactory | None = None) -> "Propagator":
        if n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if not t1 > t0:
            raise ValueError("t1 must exceed t0")
        factory = factory or StepFactory(H, method)
        times = np.linspace(t0, t1, n_steps + 1)
        dt = (t1 - t0) / n_steps
        segs = [Segment(float(a), float(b), factory.action(float(a), dt))
                for a, b in zip(times[:-1], times[1:])]
        return cls(segs, H.hbar, dim=H.dim)

    @classmethod
    def identity(cls, t0: float, dim: int | None = None, hbar: float = 1.0) -> "Propagator":
        return cls((), hbar, t_start=t0, dim=dim)

    @property
    def times(self) -> np.ndarray:
        return np.array([self._t0] + [s.t_end for s in self.segments])

    @property
    def t_start(self) -> float:
        return self._t0

    @property
    def t_end(self) -> float:
        return self.segments[-1].t_end if self.segments else self._t0

    def then(self, later: "Propagator") -> "Propagator":
        """``later`` applied after ``self``: segments concatenate."""
        if not math.isclose(self.t_end, later.t_start, rel_tol=1e-12, abs_tol=1e-12):
            raise ValueError("propagators are not contiguous")
        return Propagator(self.segments + later.segments, self.hbar,
                          t_start=self._t0, dim=self.dim or later.dim)

    def index_of(self, t: float) -> int:
        times = self.times
        i = int(np.argmin(np.abs(times - t)))
        scale = max(1.0, abs(times[-1]), abs(times[0]))
        if abs(times[i] - t) > 1e-9 * scale:
            raise ValueError(f"time {t} is not a step boundary within "
                             f"[{times[0]}, {times[-1]}]")
        return i

    def apply(self, psi: np.ndarray, t: float | None = None, s: float | None = None) -> np.ndarray:
        """``U(t, s) psi``; defaults to the full span."""
        i_s = 0 if s is None else self.index_of(s)
        i_t = len(self.segments) if t is None else self.index_of(t)
        out = np.array(psi, dtype=complex, copy=True)
        if i_t >= i_s:
            for seg in self.segments[i_s:i_t]:
                out = seg.forward(out)
        else:
            for seg in reversed(self.segments[i_t:i_s]):
                out = seg.backward(out)
        return out

    def matrix(self, t: float | None = None, s: float | None = None,
               max_dim: int = DEFAULT_MAX_DIM) -> np.ndarray:
        if self.dim is None:
            raise ValueError("propagator dimension unknown")
        if self.dim > max_dim:
            raise ValueError(f"dimension {self.dim} exceeds the dense cap {max_dim}")
        return self.apply(np.eye(self.dim, dtype=complex), t, s)


class OnDemandEvolution:
    """``U(t, s)`` for arbitrary times, built from uniform steps no longer than ``max_step``."""

    def __init__(self, H: Hamiltonian, max_step: float, method: str = "crank_nicolson"):
        if not max_step > 0:
            raise ValueError("max_step must be positive")
        self.H = H
        self.max_step = max_step
        self.method = method
        self._factory = StepFactory(H, method)

    @property
    def dim(self) -> int:
        return self.H.dim

    def _propagator(self, t: float, s: float) -> Propagator | None:
        lo, hi = min(t, s), max(t, s)
        if hi == lo:
            return None
        n = max(1, math.ceil((hi - lo) / self.max_step - 1e-9))
        return Propagator.uniform(self.H, lo, hi, n, self.method, self._factory)

    def apply(self, psi, t: float, s: float) -> np.ndarray:
        prop = self._propagator(t, s)
        if prop is None:
            return np.array(psi, dtype=complex, copy=True)
        return prop.apply(psi, t, s)

    def matrix(self, t: float, s: float, max_dim: int = DEFAULT_MAX_DIM) -> np.ndarray:
        if self.dim > max_dim:
            raise ValueError(f"dimension {self.dim} exceeds the dense cap {max_dim}")
        return self.apply(np.eye(self.dim, dtype=complex), t, s)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    diagnostics: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states)
        if len(self.times) != len(self.states):
            raise ValueError("times and states differ in length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly ascending")

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def __len__(self):
        return len(self.times)


def propagate(H: Hamiltonian, psi0: np.ndarray, t0: float, t1: float, n_steps: int,
              method: str = "crank_nicolson", keep_every: int = 1) -> Trajectory:
    """Uniform-step evolution from ``t0`` to ``t1``.

    Diagnostics ``norm`` and, when ``H`` declares a metric, ``eta_form``
    (``<psi|eta|psi>``) are recorded at every step alongside ``step_times``;
    states are kept every ``keep_every`` steps (the final one always).
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if not t1 > t0:
        raise ValueError("t1 must exceed t0")
    psi = np.asarray(psi0, dtype=complex)
    if psi.shape != (H.dim,):
        raise ValueError(f"state has shape {psi.shape}, Hamiltonian dimension is {H.dim}")
    factory = StepFactory(H, method)
    times = np.linspace(t0, t1, n_steps + 1)
    dt = (t1 - t0) / n_steps
    norms = [np.linalg.norm(psi)]
    eta = H.metric_matrix() if H.metric is not None else None
    forms = [np.vdot(psi, eta @ psi).real] if eta is not None else None
    kept_t, kept = [t0], [psi]
    for j in range(n_steps):
        psi = factory.action(float(times[j]), dt).forward(psi)
        norms.append(np.linalg.norm(psi))
        if eta is not None:
            forms.append(np.vdot(psi, eta @ psi).real)
        if (j + 1) % keep_every == 0 or j + 1 == n_steps:
            kept_t.append(times[j + 1])
            kept.append(psi)
    diag = {"step_times": times, "norm": np.array(norms)}
    if forms is not None:
        diag["eta_form"] = np.array(forms)
    return Trajectory(np.array(kept_t), np.array(kept), diag)


def propagator_matrix(H: Hamiltonian, t: float, s: float, n_steps: int,
                      method: str = "crank_nicolson", max_dim: int = DEFAULT_MAX_DIM) -> np.ndarray:
    """Dense ``U(t, s)`` from ``n_steps`` uniform steps; ``U(s, s)`` is the identity."""
    if H.dim > max_dim:
        raise ValueError(f"dimension {H.dim} exceeds the dense cap {max_dim}")
    if t == s:
        return np.eye(H.dim, dtype=complex)
    prop = Propagator.uniform(H, min(t, s), max(t, s), n_steps, method)
    return prop.matrix(t, s, max_dim)


def schrodinger_residual(H: Hamiltonian, trajectory: Trajectory) -> float:
    """Largest ``|i hbar dpsi/dt - H psi| / |psi|`` over interior samples (central differences)."""
    times, states = trajectory.times, trajectory.states
    if len(times) < 3:
        raise ValueError("residual needs at least 3 samples")
    worst = 0.0
    for j in range(1, len(times) - 1):
        dpsi = (states[j + 1] - states[j - 1]) / (times[j + 1] - times[j - 1])
        r = np.linalg.norm(1j * H.hbar * dpsi - H.matrix(times[j]) @ states[j])
        n = np.linalg.norm(states[j])
        worst = max(worst, np.inf if n == 0 else r / n)
    return float(worst)


def phase_advance(before: np.ndarray, after: np.ndarray) -> float:
    """Phase of ``<before|after>``, i.e. the rotation angle of an eigenvector."""
    return float(np.angle(np.vdot(before, after)))
