"""Exact decoherence channels for independent decay and dephasing.

The free evolution is a phase rotation about z plus per-atom amplitude
damping and dephasing.  Because every Lindblad term acts on a single atom
and the z rotation commutes with all of them, the finite-time channel
factorizes exactly into the rotation followed by per-atom Kraus maps:

  amplitude damping  p = 1 - exp(-Gamma T)      (populations),
  dephasing          q = (1 - exp(-gamma T/2))/2 (phase flip),

so a single-atom coherence shrinks by exp(-(Gamma+gamma) T/2).  No ODE
integration is involved; the composition is exact at any T.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spin import (
    MAX_DENSE_ATOMS,
    EnsembleParams,
    PureState,
    SpinError,
    SpinMoments,
    sz_eigenvalues,
)

# construction guards; channel-output quality is tested to 1e-12 separately
TRACE_TOL = 1e-9
EIG_FLOOR = -1e-10


class ChannelError(ValueError):
    """Non-physical state or unsupported dimension in a channel operation."""


@dataclass(frozen=True)
class ChannelParams:
    """Free-evolution window: rates, duration T, and accumulated phase."""

    params: EnsembleParams
    duration: float
    phase: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.duration) or self.duration < 0:
            raise ChannelError(f"duration must be finite and >= 0, got {self.duration}")


@dataclass(frozen=True)
class DensityState:
    """Hermitian, unit-trace, positive-semidefinite density matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        n = int(round(math.log2(mat.shape[0])))
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or 2**n != mat.shape[0]:
            raise ChannelError(f"density matrix shape {mat.shape} is not square 2^N")
        if abs(np.trace(mat).real - 1.0) > TRACE_TOL or abs(np.trace(mat).imag) > TRACE_TOL:
            raise ChannelError(f"trace {np.trace(mat)} deviates from 1")
        if np.max(np.abs(mat - mat.conj().T)) > TRACE_TOL:
            raise ChannelError("matrix is not Hermitian")
        if np.linalg.eigvalsh(mat).min() < EIG_FLOOR:
            raise ChannelError("matrix has a negative eigenvalue beyond tolerance")
        object.__setattr__(self, "matrix", mat)

    @property
    def n_atoms(self) -> int:
        return int(round(math.log2(self.matrix.shape[0])))

    @classmethod
    def from_pure(cls, state: PureState) -> "DensityState":
        return cls(np.outer(state.amplitudes, state.amplitudes.conj()))

    def expectation(self, op: np.ndarray) -> float:
        return float(np.einsum("ij,ji->", self.matrix, op).real)


def _left_mul_single(rho: np.ndarray, op2: np.ndarray, atom: int, n_atoms: int) -> np.ndarray:
    """(op2 on one atom) @ rho, returned as a 2^N x 2^N matrix."""
    dim = 2**n_atoms
    t = rho.reshape((2,) * (2 * n_atoms))
    ax = n_atoms - 1 - atom
    t = np.moveaxis(np.tensordot(op2, t, axes=([1], [ax])), 0, ax)
    return np.ascontiguousarray(t).reshape(dim, dim)


def _right_mul_single(rho: np.ndarray, op2: np.ndarray, atom: int, n_atoms: int) -> np.ndarray:
    """rho @ (op2 on one atom); contraction over the column index."""
    dim = 2**n_atoms
    t = rho.reshape((2,) * (2 * n_atoms))
    ax = 2 * n_atoms - 1 - atom
    t = np.moveaxis(np.tensordot(op2.T, t, axes=([1], [ax])), 0, ax)
    return np.ascontiguousarray(t).reshape(dim, dim)


def _apply_kraus_single(rho: np.ndarray, kraus, atom: int, n_atoms: int) -> np.ndarray:
    """sum_i K_i rho K_i^dag with 2x2 Kraus operators on one atom."""
    out = np.zeros_like(rho)
    for k in kraus:
        out += _right_mul_single(_left_mul_single(rho, k, atom, n_atoms), k.conj().T, atom, n_atoms)
    return out


def rotate_z(rho: np.ndarray, phi: float, n_atoms: int) -> np.ndarray:
    """R_z(phi) rho R_z(phi)^dag via diagonal phases exp(-i phi m)."""
    phases = np.exp(-1j * phi * sz_eigenvalues(n_atoms))
    return phases[:, None] * rho * phases.conj()[None, :]


def damping_kraus(p: float):
    k0 = np.array([[1.0, 0.0], [0.0, math.sqrt(1.0 - p)]], dtype=complex)
    k1 = np.array([[0.0, math.sqrt(p)], [0.0, 0.0]], dtype=complex)
    return (k0, k1)


def dephasing_kraus(q: float):
    sz = np.array([[-1.0, 0.0], [0.0, 1.0]], dtype=complex)
    return (math.sqrt(1.0 - q) * np.eye(2, dtype=complex), math.sqrt(q) * sz)


def evolve_oracle(state: DensityState, cp: ChannelParams) -> DensityState:
    """Exact brute-force channel: z rotation, then per-atom damping and
    dephasing Kraus maps.  Dense; guarded to small atom numbers."""
    n = state.n_atoms
    if n > MAX_DENSE_ATOMS:
        raise ChannelError(f"evolve_oracle guarded to N <= {MAX_DENSE_ATOMS}, got {n}")
    if cp.params.n_atoms != n:
        raise ChannelError("params.n_atoms does not match the state dimension")
    gamma, deph, t = cp.params.gamma_decay, cp.params.gamma_dephase, cp.duration
    rho = rotate_z(state.matrix, cp.phase, n)
    p = 1.0 - math.exp(-gamma * t)
    q = 0.5 * (1.0 - math.exp(-0.5 * deph * t))
    damp = damping_kraus(p)
    flip = dephasing_kraus(q)
    for atom in range(n):
        if p > 0.0:
            rho = _apply_kraus_single(rho, damp, atom, n)
        if q > 0.0:
            rho = _apply_kraus_single(rho, flip, atom, n)
    return DensityState(rho)


def ghz_survival_probs(cp: ChannelParams):
    """Structural pieces of the decayed ghz state, valid for any N.

    Returns (coherence magnitude, excited-state survival e^{-Gamma T},
    coherence phase angle N*phi); the materialized matrix additionally
    carries the per-atom product-decay weights.
    """
    g = cp.params
    coh = math.exp(-0.5 * g.gamma_total * g.n_atoms * cp.duration)
    surv = math.exp(-g.gamma_decay * cp.duration)
    return coh, surv, g.n_atoms * cp.phase


def evolve_ghz_analytic(cp: ChannelParams) -> DensityState:
    """Decayed ghz state: ground projector, N-atom coherences with factor
    exp(-(Gamma+gamma) N T / 2) exp(+-i N phi), and the per-atom product
    decay term, each weighted 1/2."""
    n = cp.params.n_atoms
    if n > MAX_DENSE_ATOMS:
        raise ChannelError(f"evolve_ghz_analytic guarded to N <= {MAX_DENSE_ATOMS}, got {n}")
    coh, surv, angle = ghz_survival_probs(cp)
    dim = 2**n
    rho = np.zeros((dim, dim), dtype=complex)
    rho[0, 0] += 0.5
    rho[0, dim - 1] += 0.5 * coh * np.exp(1j * angle)
    rho[dim - 1, 0] += 0.5 * coh * np.exp(-1j * angle)
    # product decay: diagonal weight surv^popcount (1-surv)^(N-popcount)
    ups = sz_eigenvalues(n) + n / 2.0
    diag = surv**ups * (1.0 - surv) ** (n - ups)
    rho[np.arange(dim), np.arange(dim)] += 0.5 * diag
    return DensityState(rho)


def evolve_moments(initial: SpinMoments, cp: ChannelParams) -> SpinMoments:
    """Closed-form decay of transverse moments; the phase rotation mixing
    <S_x> and <S_y> is applied by the caller."""
    c = cp.params.gamma_total
    t = cp.duration
    contrast = math.exp(-0.5 * c * t)
    damp = math.exp(-c * t)
    n = initial.n_atoms
    return SpinMoments(
        n_atoms=n,
        mean_sx=contrast * initial.mean_sx,
        mean_sy=contrast * initial.mean_sy,
        var_sy=0.25 * n * (1.0 - damp) + damp * initial.var_sy,
    )


def rotate_density(state: DensityState, theta: float, axis: str) -> DensityState:
    """Collective rotation of a density matrix, applied per atom."""
    from .spin import _PAULI  # single source for the Pauli convention

    if axis not in _PAULI:
        raise SpinError(f"unknown axis {axis!r}")
    n = state.n_atoms
    u2 = math.cos(theta / 2.0) * np.eye(2, dtype=complex) - 1j * math.sin(theta / 2.0) * _PAULI[axis]
    rho = state.matrix
    for atom in range(n):
        rho = _apply_kraus_single(rho, (u2,), atom, n)
    return DensityState(rho)


def lindblad_generator(rho: np.ndarray, params: EnsembleParams, omega: float = 0.0) -> np.ndarray:
    """Right-hand side of the master equation, for finite-difference checks."""
    n = int(round(math.log2(rho.shape[0])))
    m = sz_eigenvalues(n)
    out = -1j * omega * (m[:, None] - m[None, :]) * rho
    sm = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)  # |down><up|
    sz_half = 0.5 * np.array([[-1.0, 0.0], [0.0, 1.0]], dtype=complex)
    for op, rate in ((sm, params.gamma_decay), (sz_half, params.gamma_dephase)):
        if rate == 0.0:
            continue
        opd = op.conj().T @ op
        for atom in range(n):
            jump = _apply_kraus_single(rho, (op,), atom, n)
            anti = _left_mul_single(rho, opd, atom, n) + _right_mul_single(rho, opd, atom, n)
            out += 0.5 * rate * (2.0 * jump - anti)
    return out
