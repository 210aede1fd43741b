"""Fibre-bundle description of the evolution along an observer's world line.

A frame family ``l(t)`` identifies the fibre over ``gamma(t)`` with the state
space.  Liftings are ``Psi(t) = l(t)^-1 psi(t)``; the evolution transport is
``U_gamma(t, s) = l(t)^-1 U(t, s) l(s)``.

Sign conventions
----------------
The transport coefficients are the generator of the transport in the frame,
``Gamma(s) = dU_gamma(t, s)/dt at t = s``, so that ``Gamma = -(i/hbar) H_bundle``
with ``H_bundle = i hbar (dU_gamma/dt) U_gamma^-1``.  For a constant frame
and identity frames this is ``-(i/hbar) H``.  The derivation along the path,

    D_s lambda = lim (U_gamma(s, s+eps) lambda(s+eps) - lambda(s)) / eps,

then equals ``dlambda/ds - Gamma(s) lambda(s)`` and vanishes exactly on
transported liftings.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Protocol, Sequence

import numpy as np
import scipy.linalg as sla
from scipy import sparse

from .lattice import LatticeOperator
from .reduction import Hamiltonian

EPS_FLOOR = 1e-10


class Evolution(Protocol):
    dim: int

    def apply(self, psi: np.ndarray, t: float, s: float) -> np.ndarray: ...

    def matrix(self, t: float, s: float) -> np.ndarray: ...


@dataclass(frozen=True)
class Path:
    """World line ``gamma(t) = (t, x(t))`` over ``[t_start, t_end]``."""

    t_start: float
    t_end: float
    position: Callable[[float], np.ndarray] | None = None

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ValueError("path interval must have t_end > t_start")

    def point(self, t: float) -> np.ndarray:
        x = np.zeros(3) if self.position is None else np.asarray(self.position(t), dtype=float)
        return np.concatenate([[t], x])

    def velocity(self, t: float, h: float = 1e-6) -> np.ndarray:
        return (self.point(t + h)[1:] - self.point(t - h)[1:]) / (2 * h)

    def samples(self, n: int) -> np.ndarray:
        return np.linspace(self.t_start, self.t_end, n)


FRAME_KINDS = ("identity", "scalar_phase", "smooth_random")


class FrameFamily:
    """Invertible fibre maps ``l(t)`` along a path.

    ``identity``
        ``l = 1``.
    ``scalar_phase``
        ``l = exp(i theta(t))``; ``theta`` defaults to ``omega * t``.
    ``smooth_random``
        ``l = exp(S(t))`` with ``S`` a trigonometric polynomial whose complex
        Gaussian matrix coefficients are drawn from ``seed``.  ``block`` sets
        the size of ``S``; the frame then acts as ``exp(S) (x) 1`` so large
        lattices can use a small per-component frame.

    With a ``path`` and nonzero ``spatial_weight`` the frame is evaluated at
    ``t + spatial_weight * sum(x(t))`` (the chain rule is applied to the
    derivative); the default depends on ``t`` only.
    """

    def __init__(self, kind: str, dim: int, *, seed: int = 0, amplitude: float = 0.2,
                 frequencies: Sequence[float] = (1.0, 2.3), omega: float = 1.0,
                 theta: Callable[[float], float] | None = None,
                 dtheta: Callable[[float], float] | None = None,
                 block: int | None = None, path: Path | None = None,
                 spatial_weight: float = 0.0, cond_max: float = 1e8):
        if kind not in FRAME_KINDS:
            raise ValueError(f"unknown frame kind {kind!r}; choose from {FRAME_KINDS}")
        self.kind = kind
        self.dim = int(dim)
        self.seed = seed
        self.cond_max = cond_max
        self.path = path
        self.spatial_weight = spatial_weight
        if kind == "scalar_phase":
            if theta is None:
                theta, dtheta = (lambda t: omega * t), (lambda t: omega)
            elif dtheta is None:
                raise ValueError("scalar_phase frames need dtheta alongside theta")
            self._theta, self._dtheta = theta, dtheta
        if kind == "smooth_random":
            size = self.dim if block is None else int(block)
            if self.dim % size:
                raise ValueError(f"block {size} does not divide dimension {self.dim}")
            self.block = size
            rng = np.random.default_rng(seed)
            scale = amplitude / math.sqrt(size)
            shape = (len(frequencies), size, size)
            self._cos = scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)
            self._sin = scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)
            self._freqs = np.asarray(frequencies, dtype=float)
            self._small = lru_cache(maxsize=256)(self._small_uncached)

    # parameter along the path -------------------------------------------

    def _tau(self, t: float) -> tuple[float, float]:
        if self.path is None or self.spatial_weight == 0:
            return t, 1.0
        x = self.path.point(t)[1:]
        rate = 1.0 + self.spatial_weight * float(np.sum(self.path.velocity(t)))
        return t + self.spatial_weight * float(np.sum(x)), rate

    def _small_uncached(self, tau: float):
        w = self._freqs[:, None, None]
        s = np.sum(self._cos * np.cos(w * tau) + self._sin * np.sin(w * tau), axis=0)
        ds = np.sum(w * (-self._cos * np.sin(w * tau) + self._sin * np.cos(w * tau)), axis=0)
        l, dl = sla.expm_frechet(s, ds)
        return l, dl, np.linalg.inv(l)

    def _expand(self, m: np.ndarray):
        if self.block == self.dim:
            return m
        return sparse.kron(sparse.csr_matrix(m), sparse.identity(self.dim // self.block), format="csr")

    # public API -----------------------------------------------------------

    def matrix(self, t: float) -> np.ndarray:
        if self.kind == "identity":
            return np.eye(self.dim, dtype=complex)
        tau, _ = self._tau(t)
        if self.kind == "scalar_phase":
            return np.exp(1j * self._theta(tau)) * np.eye(self.dim)
        return self._dense(self._expand(self._small(tau)[0]))

    def derivative(self, t: float) -> np.ndarray:
        if self.kind == "identity":
            return np.zeros((self.dim, self.dim), dtype=complex)
        tau, rate = self._tau(t)
        if self.kind == "scalar_phase":
            return 1j * self._dtheta(tau) * rate * np.exp(1j * self._theta(tau)) * np.eye(self.dim)
        return rate * self._dense(self._expand(self._small(tau)[1]))

    def inverse(self, t: float) -> np.ndarray:
        if self.kind == "identity":
            return np.eye(self.dim, dtype=complex)
        tau, _ = self._tau(t)
        if self.kind == "scalar_phase":
            return np.exp(-1j * self._theta(tau)) * np.eye(self.dim)
        return self._dense(self._expand(self._small(tau)[2]))

    @staticmethod
    def _dense(m):
        return m.toarray() if sparse.issparse(m) else m

    def condition(self, t: float) -> float:
        if self.kind != "smooth_random":
            return 1.0
        return float(np.linalg.cond(self._small(self._tau(t)[0])[0]))

    def check(self, t: float):
        cond = self.condition(t)
        if not np.isfinite(cond) or cond > self.cond_max:
            raise np.linalg.LinAlgError(f"frame at t={t} is ill-conditioned (cond={cond:.3g})")

    def apply(self, t: float, v: np.ndarray) -> np.ndarray:
        """``l(t) v``."""
        v = np.asarray(v)
        if self.kind == "identity":
            return v.copy()
        if self.kind == "scalar_phase":
            return np.exp(1j * self._theta(self._tau(t)[0])) * v
        return self._blockwise(self._small(self._tau(t)[0])[0], v)

    def solve(self, t: float, v: np.ndarray) -> np.ndarray:
        """``l(t)^-1 v``."""
        v = np.asarray(v)
        if self.kind == "identity":
            return v.copy()
        self.check(t)
        if self.kind == "scalar_phase":
            return np.exp(-1j * self._theta(self._tau(t)[0])) * v
        l_small = self._small(self._tau(t)[0])[0]
        if v.ndim == 1:
            return self._blockwise_solve(l_small, v)
        return np.stack([self._blockwise_solve(l_small, col) for col in v.T], axis=1)

    def _blockwise(self, m: np.ndarray, v: np.ndarray) -> np.ndarray:
        if self.block == self.dim:
            return m @ v
        rest = self.dim // self.block
        shaped = v.reshape((self.block, rest) + v.shape[1:])
        return np.tensordot(m, shaped, axes=(1, 0)).reshape(v.shape)

    def _blockwise_solve(self, m: np.ndarray, v: np.ndarray) -> np.ndarray:
        if self.block == self.dim:
            return np.linalg.solve(m, v)
        rest = self.dim // self.block
        return np.linalg.solve(m, v.reshape(self.block, rest)).reshape(v.shape)


@dataclass
class Lifting:
    """Fibre vectors ``Psi(t)`` sampled along a path."""

    path: Path
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values)
        if len(self.times) != len(self.values):
            raise ValueError("times and values differ in length")

    def __call__(self, t: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.times - t)))
        scale = max(1.0, float(np.max(np.abs(self.times))))
        if abs(self.times[i] - t) > 1e-9 * scale:
            raise ValueError(f"lifting is not sampled at t={t}")
        return self.values[i]

    @classmethod
    def from_states(cls, frames: FrameFamily, path: Path, times, states) -> "Lifting":
        values = np.array([lift_state(frames, psi, t) for t, psi in zip(times, states)])
        return cls(path, np.asarray(times), values)


def lift_state(frames: FrameFamily, psi: np.ndarray, t: float) -> np.ndarray:
    """``Psi(t) = l(t)^-1 psi(t)``."""
    return frames.solve(t, psi)


def lower_state(frames: FrameFamily, Psi: np.ndarray, t: float) -> np.ndarray:
    return frames.apply(t, Psi)


def _dense(op) -> np.ndarray:
    if isinstance(op, LatticeOperator):
        return op.dense()
    if sparse.issparse(op):
        return op.toarray()
    return np.asarray(op)


def lift_operator(frames: FrameFamily, A, t: float) -> np.ndarray:
    """``A_gamma(t) = l(t)^-1 A l(t)`` as a dense matrix."""
    a = _dense(A)
    if frames.kind == "identity":
        return a.copy()
    if frames.kind == "scalar_phase":
        return a.copy()
    return frames.solve(t, a @ frames.matrix(t))


class EvolutionTransport:
    """``U_gamma(t, s) = l(t)^-1 U(t, s) l(s)`` for a propagator-like ``U``."""

    def __init__(self, frames: FrameFamily, evolution: Evolution):
        if evolution.dim is not None and evolution.dim != frames.dim:
            raise ValueError("frame and evolution dimensions differ")
        self.frames = frames
        self.evolution = evolution

    @property
    def dim(self) -> int:
        return self.frames.dim

    def apply(self, Psi: np.ndarray, t: float, s: float) -> np.ndarray:
        psi = self.frames.apply(s, Psi)
        return self.frames.solve(t, self.evolution.apply(psi, t, s))

    def matrix(self, t: float, s: float) -> np.ndarray:
        return self.apply(np.eye(self.dim, dtype=complex), t, s)

    __call__ = matrix


def evolution_transport(frames: FrameFamily, U: Evolution, t: float, s: float) -> np.ndarray:
    return EvolutionTransport(frames, U).matrix(t, s)


def transport_coefficients_from_hamiltonian(frames: FrameFamily, H: Hamiltonian, t: float) -> np.ndarray:
    """``Gamma(t) = -(i/hbar) l^-1 H l - l^-1 dl/dt``."""
    h = _dense(H.evaluate(t))
    gamma = -1j / H.hbar * lift_operator(frames, h, t)
    if frames.kind != "identity":
        gamma = gamma - frames.solve(t, frames.derivative(t))
    return gamma


def matrix_bundle_hamiltonian(frames: FrameFamily, H: Hamiltonian, t: float) -> np.ndarray:
    return 1j * H.hbar * transport_coefficients_from_hamiltonian(frames, H, t)


def transport_coefficients_from_transport(transport: Callable[[float, float], np.ndarray] | EvolutionTransport,
                                          s: float, eps: float) -> np.ndarray:
    """Forward-difference ``(U_gamma(s + eps, s) - 1) / eps``; accurate to O(eps)."""
    if not eps >= EPS_FLOOR:
        raise ValueError(f"eps={eps} is below the roundoff floor {EPS_FLOOR}")
    u = transport(s + eps, s)
    return (u - np.eye(u.shape[0])) / eps


def derivation_along_path(transport: EvolutionTransport | None, lifting: Lifting | Callable,
                          s: float, eps: float, *, gamma: np.ndarray | None = None,
                          richardson: bool = False) -> np.ndarray:
    """Finite-difference derivation of a lifting along the path.

    With ``transport`` the defining quotient
    ``(U_gamma(s, s+eps) lambda(s+eps) - lambda(s)) / eps`` is used.  With
    ``gamma`` (the transport coefficients at ``s``) the component form
    ``(lambda(s+eps) - lambda(s)) / eps - Gamma lambda(s)`` is used instead;
    this is first order in ``eps``.  ``richardson`` combines ``eps`` and
    ``eps/2`` to cancel the leading error.
    """
    if not eps >= EPS_FLOOR:
        raise ValueError(f"eps={eps} is below the roundoff floor {EPS_FLOOR}")
    if richardson:
        half = derivation_along_path(transport, lifting, s, eps / 2, gamma=gamma)
        full = derivation_along_path(transport, lifting, s, eps, gamma=gamma)
        return 2 * half - full
    here = np.asarray(lifting(s))
    ahead = np.asarray(lifting(s + eps))
    if gamma is not None:
        return (ahead - here) / eps - gamma @ here
    if transport is None:
        raise ValueError("need a transport or transport coefficients")
    return (transport.apply(ahead, s, s + eps) - here) / eps


def fibre_inner(frames: FrameFamily, t: float, Psi1: np.ndarray, Psi2: np.ndarray) -> complex:
    """``<Psi1|Psi2>_x = <l Psi1 | l Psi2>``."""
    return complex(np.vdot(frames.apply(t, Psi1), frames.apply(t, Psi2)))


def mean_value(frames: FrameFamily, A_gamma: np.ndarray, Psi: np.ndarray, t: float) -> complex:
    norm = fibre_inner(frames, t, Psi, Psi)
    if norm.real <= 0:
        raise ValueError("mean value of a zero-norm state")
    return fibre_inner(frames, t, Psi, _dense(A_gamma) @ Psi) / norm


@dataclass
class TransportCoefficients:
    times: np.ndarray
    values: np.ndarray  # (n_times, dim, dim)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("transport coefficients are not finite")

    @classmethod
    def from_hamiltonian(cls, frames: FrameFamily, H: Hamiltonian, times) -> "TransportCoefficients":
        times = np.asarray(times, dtype=float)
        return cls(times, np.array([transport_coefficients_from_hamiltonian(frames, H, t) for t in times]))

    def rows(self, threshold: float = 0.0):
        """``(t, row, col, re, im)`` for entries with modulus above ``threshold``."""
        for t, g in zip(self.times, self.values):
            rows, cols = np.nonzero(np.abs(g) > threshold)
            for r, c in zip(rows, cols):
                yield t, int(r), int(c), g[r, c].real, g[r, c].imag

    def write_csv(self, path, threshold: float = 0.0):
        from .io import atomic_writer, fmt

        with atomic_writer(path) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "row", "col", "re", "im"])
            for t, r, c, re, im in self.rows(threshold):
                w.writerow([fmt(t), r, c, fmt(re), fmt(im)])
