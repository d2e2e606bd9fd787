"""Collective-spin states and operators on the full 2^N product basis.

Basis convention (little endian): bit k of a basis index gives the level of
atom k, with bit value 1 = excited |up> and 0 = ground |down>.  Single-atom
Pauli matrices are written in the (down, up) ordering, so sigma_z =
diag(-1, +1) and the collective S_z eigenvalue of index b is
popcount(b) - N/2.  State comparisons are meant up to a global phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# construction guard; unitarity of the operations themselves holds to 1e-12
NORM_TOL = 1e-9

# maximum atom number for dense 2^N objects (memory guard)
MAX_DENSE_ATOMS = 12

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, 1.0j], [-1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[-1.0, 0.0], [0.0, 1.0]], dtype=complex)
HADAMARD = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) / math.sqrt(2.0)

_PAULI = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}


class SpinError(ValueError):
    """Invalid parameter, state, or dimension in a spin operation."""


@dataclass(frozen=True)
class EnsembleParams:
    """Atom number N and single-atom decoherence rates (1/s)."""

    n_atoms: int
    gamma_decay: float = 0.0
    gamma_dephase: float = 0.0

    def __post_init__(self):
        if int(self.n_atoms) != self.n_atoms or self.n_atoms < 1:
            raise SpinError(f"n_atoms must be a positive integer, got {self.n_atoms}")
        for name in ("gamma_decay", "gamma_dephase"):
            rate = getattr(self, name)
            if not np.isfinite(rate) or rate < 0:
                raise SpinError(f"{name} must be finite and >= 0, got {rate}")

    @property
    def gamma_total(self) -> float:
        """Combined decoherence rate Gamma + gamma."""
        return self.gamma_decay + self.gamma_dephase


@dataclass(frozen=True)
class PureState:
    """Normalized state vector over the 2^N product basis."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        n = int(round(math.log2(amps.size)))
        if 2**n != amps.size:
            raise SpinError(f"amplitude vector length {amps.size} is not a power of 2")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > NORM_TOL:
            raise SpinError(f"state norm {norm} deviates from 1")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def n_atoms(self) -> int:
        return int(round(math.log2(self.amplitudes.size)))

    def fidelity(self, other: "PureState") -> float:
        """|<self|other>|, insensitive to global phases."""
        return abs(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True)
class SpinMoments:
    """First/second collective-spin moments used by the moment protocols.

    var_sy holds the second moment <S_y^2>; for every state produced here
    <S_y> = 0, so it coincides with the variance.
    """

    n_atoms: int
    mean_sx: float
    mean_sy: float
    var_sy: float

    def __post_init__(self):
        half = self.n_atoms / 2.0
        if self.var_sy < -1e-12:
            raise SpinError(f"var_sy must be >= 0, got {self.var_sy}")
        if abs(self.mean_sx) > half * (1 + 1e-12) or abs(self.mean_sy) > half * (1 + 1e-12):
            raise SpinError("mean spin components exceed N/2")


def _check_n_atoms(n_atoms, limit=MAX_DENSE_ATOMS):
    if int(n_atoms) != n_atoms or n_atoms < 1:
        raise SpinError(f"n_atoms must be a positive integer, got {n_atoms}")
    if n_atoms > limit:
        raise SpinError(f"n_atoms {n_atoms} exceeds the dense-representation guard {limit}")
    return int(n_atoms)


def sz_eigenvalues(n_atoms: int) -> np.ndarray:
    """S_z eigenvalue (popcount - N/2) of every basis index."""
    idx = np.arange(2**n_atoms)
    count = np.zeros(idx.size, dtype=np.int64)
    for k in range(n_atoms):
        count += (idx >> k) & 1
    return count - n_atoms / 2.0


def collective_op(n_atoms: int, axis: str) -> np.ndarray:
    """Dense collective spin matrix S_axis = sum_k sigma_axis^(k) / 2."""
    n = _check_n_atoms(n_atoms)
    if axis not in _PAULI:
        raise SpinError(f"unknown axis {axis!r}")
    dim = 2**n
    if axis == "z":
        return np.diag(sz_eigenvalues(n)).astype(complex)
    op = np.zeros((dim, dim), dtype=complex)
    sigma = _PAULI[axis]
    for k in range(n):
        term = np.array([[1.0]], dtype=complex)
        for j in range(n - 1, -1, -1):
            term = np.kron(term, sigma if j == k else np.eye(2, dtype=complex))
        op += term / 2.0
    return op


def _apply_single_qubit(vec: np.ndarray, u2: np.ndarray, atom: int, n_atoms: int) -> np.ndarray:
    # axis j of the reshaped tensor corresponds to atom n_atoms-1-j
    t = vec.reshape((2,) * n_atoms)
    ax = n_atoms - 1 - atom
    t = np.tensordot(u2, t, axes=([1], [ax]))
    t = np.moveaxis(t, 0, ax)
    return np.ascontiguousarray(t).reshape(-1)


def _apply_all_qubits(vec: np.ndarray, u2: np.ndarray, n_atoms: int) -> np.ndarray:
    out = vec
    for k in range(n_atoms):
        out = _apply_single_qubit(out, u2, k, n_atoms)
    return out


def build_state(kind: str, n_atoms: int) -> PureState:
    """Reference input states: ground |down..down>, uniform css, or ghz."""
    n = _check_n_atoms(n_atoms)
    dim = 2**n
    amps = np.zeros(dim, dtype=complex)
    if kind == "ground":
        amps[0] = 1.0
    elif kind == "css":
        amps[:] = 1.0 / math.sqrt(dim)
    elif kind == "ghz":
        amps[0] = 1.0 / math.sqrt(2.0)
        amps[-1] = 1.0 / math.sqrt(2.0)
    else:
        raise SpinError(f"unknown state kind {kind!r}")
    return PureState(amps)


def apply_rotation(state: PureState, theta: float, axis: str) -> PureState:
    """Collective rotation exp(-i theta S_axis) as a per-atom 2x2 product."""
    if axis not in _PAULI:
        raise SpinError(f"unknown axis {axis!r}")
    u2 = math.cos(theta / 2.0) * np.eye(2, dtype=complex) - 1j * math.sin(theta / 2.0) * _PAULI[axis]
    return PureState(_apply_all_qubits(state.amplitudes, u2, state.n_atoms))


def apply_oat(state: PureState, mu: float, axis: str) -> PureState:
    """One-axis twisting exp(-i (mu/2) S_axis^2) along x or z.

    The x case is reduced to the diagonal z case by a Hadamard transform on
    every atom, which maps S_x^2 to S_z^2 exactly.
    """
    n = state.n_atoms
    m = sz_eigenvalues(n)
    phases = np.exp(-0.5j * mu * m * m)
    if axis == "z":
        return PureState(state.amplitudes * phases)
    if axis == "x":
        vec = _apply_all_qubits(state.amplitudes, HADAMARD, n)
        vec = vec * phases
        vec = _apply_all_qubits(vec, HADAMARD, n)
        return PureState(vec)
    raise SpinError(f"OAT axis must be 'x' or 'z', got {axis!r}")


def rotation_matrix(n_atoms: int, theta: float, axis: str) -> np.ndarray:
    """Dense matrix of the collective rotation exp(-i theta S_axis)."""
    n = _check_n_atoms(n_atoms)
    u2 = math.cos(theta / 2.0) * np.eye(2, dtype=complex) - 1j * math.sin(theta / 2.0) * _PAULI[axis]
    full = np.array([[1.0]], dtype=complex)
    for _ in range(n):
        full = np.kron(full, u2)
    return full


def u_ghz(n_atoms: int) -> np.ndarray:
    """Entangling pulse used for both state preparation and readout.

    Composed as the pi one-axis twisting about x, preceded for odd N by an
    extra pi/2 rotation about x.  Agrees with u_ghz_closed up to one global
    phase for every N.
    """
    n = _check_n_atoms(n_atoms)
    dim = 2**n
    had = np.array([[1.0]], dtype=complex)
    for _ in range(n):
        had = np.kron(had, HADAMARD)
    m = sz_eigenvalues(n)
    phases = np.exp(-0.5j * math.pi * m * m)
    twist = (had * phases[None, :]) @ had
    if n % 2 == 0:
        return twist
    return rotation_matrix(n, math.pi / 2.0, "x") @ twist


def u_ghz_closed(n_atoms: int) -> np.ndarray:
    """Closed form (1/sqrt2) e^{-i pi/(4E)} [1 + i^{N+E} sigma_x^xN]."""
    n = _check_n_atoms(n_atoms)
    dim = 2**n
    e = 1 if n % 2 == 0 else 2
    flip = np.zeros((dim, dim), dtype=complex)
    flip[np.arange(dim), dim - 1 - np.arange(dim)] = 1.0
    return (np.eye(dim, dtype=complex) + (1j) ** (n + e) * flip) * np.exp(-0.25j * math.pi / e) / math.sqrt(2.0)


def sss_moments(n_atoms: int, mu: float) -> SpinMoments:
    """Closed-form moments of the one-axis-twisted (squeezed) state.

    mean_sx = (N/2) cos^{N-1}(mu/2); var_sy is the minimal quadrature
    variance with prefactor N/4,
        (N/4) { 1 + (N-1)/4 [A - sqrt(A^2 + B^2)] },
    A = 1 - cos^{N-2}(mu), B = 4 sin(mu/2) cos^{N-2}(mu/2), which reproduces
    the css limit N/4 at mu = 0 and matches the brute-force construction.
    """
    if int(n_atoms) != n_atoms or n_atoms < 2:
        raise SpinError(f"sss_moments needs n_atoms >= 2, got {n_atoms}")
    n = int(n_atoms)
    mean_sx = 0.5 * n * math.cos(0.5 * mu) ** (n - 1)
    a = 1.0 - math.cos(mu) ** (n - 2)
    b = 4.0 * math.sin(0.5 * mu) * math.cos(0.5 * mu) ** (n - 2)
    var_sy = 0.25 * n * (1.0 + 0.25 * (n - 1) * (a - math.hypot(a, b)))
    return SpinMoments(n_atoms=n, mean_sx=mean_sx, mean_sy=0.0, var_sy=var_sy)


def expectation(state: PureState, op: np.ndarray) -> float:
    """Real expectation value <state|op|state> of a Hermitian operator."""
    val = np.vdot(state.amplitudes, op @ state.amplitudes)
    return float(val.real)


def state_moments(state: PureState) -> SpinMoments:
    """Brute-force <S_x>, <S_y>, <S_y^2> of a pure state."""
    n = state.n_atoms
    sx = collective_op(n, "x")
    sy = collective_op(n, "y")
    return SpinMoments(
        n_atoms=n,
        mean_sx=expectation(state, sx),
        mean_sy=expectation(state, sy),
        var_sy=expectation(state, sy @ sy),
    )


def build_sss(n_atoms: int, mu: float) -> PureState:
    """Squeezed input state: twisted css, realigned so the minimal quadrature
    lies along y.

    The twisting about z squeezes a quadrature in the y-z plane; the variance
    of cos-sin mixtures is a + b cos(2chi) + c sin(2chi) in the realignment
    angle chi about x, so three evaluations determine the exact minimizer.
    """
    n = _check_n_atoms(n_atoms)
    if n < 2:
        raise SpinError("build_sss needs n_atoms >= 2")
    twisted = apply_oat(build_state("css", n), mu, "z")
    sy2 = collective_op(n, "y")
    sy2 = sy2 @ sy2

    def var_at(chi):
        return expectation(apply_rotation(twisted, chi, "x"), sy2)

    v0 = var_at(0.0)
    v45 = var_at(math.pi / 4.0)
    v90 = var_at(math.pi / 2.0)
    a = 0.5 * (v0 + v90)
    b = 0.5 * (v0 - v90)
    c = v45 - a
    chi_opt = 0.5 * math.atan2(-c, -b)
    return apply_rotation(twisted, chi_opt, "x")
