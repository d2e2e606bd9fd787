"""Sensitivity bounds, quantum Fisher information, and optimization over
interrogation time and twisting strength.

Frequency variances follow from single-shot phase variances through
Delta_omega^2 = Delta_phi^2 / (T tau).  Minimizing the heralded bound over T
at gamma = 0 reduces to minimizing (e^x + 1)/x in x = Gamma N T for large N,
whose stationary point solves e^x (x - 1) = 1; the resulting plateau of the
uncertainty ratio against the uncorrelated-ensemble limit is
1/sqrt(2 e (x* - 1)) ~= 0.8128, independent of the decay rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channels import DensityState
from .protocols import ProtocolSpec, phase_uncertainty_closed
from .spin import MAX_DENSE_ATOMS, EnsembleParams, sz_eigenvalues

QFI_EIG_CUTOFF = 1e-12
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class OptimizationError(RuntimeError):
    """Bracket or unimodality violation in a sensitivity optimization."""


@dataclass(frozen=True)
class SweepRow:
    """One (N, protocol) entry of an optimal-sensitivity sweep."""

    n_atoms: int
    protocol: str
    t_min: float
    delta_omega_ratio: float
    converged: bool
    twist_mu: float | None = None


@dataclass(frozen=True)
class BoundSet:
    """Frequency-variance landmarks at fixed (N, rates, tau), in 1/s^2."""

    sql: float
    asymptotic: float
    ghz_qcrb_min: float

    def __post_init__(self):
        if not self.asymptotic <= self.sql * (1 + 1e-12):
            raise OptimizationError("asymptotic bound exceeds the uncorrelated limit")
        if not self.asymptotic <= self.ghz_qcrb_min * (1 + 1e-12):
            raise OptimizationError("ghz bound fell below the asymptotic bound")


@dataclass(frozen=True)
class SensitivityCurve:
    """Sampled Delta_phi^2(T) / Delta_omega^2(T) with its minimizer."""

    protocol: ProtocolSpec
    times: np.ndarray
    phase_var: np.ndarray
    freq_var: np.ndarray
    t_min: float
    min_freq_var: float


def qfi_numeric(state: DensityState) -> float:
    """Quantum Fisher information for z-rotation phase imprints.

    F = 2 sum_{k,l} (l_k - l_l)^2 / (l_k + l_l) |<k|S_z|l>|^2 over
    eigenpairs with l_k + l_l above a rank cutoff.
    """
    if state.n_atoms > MAX_DENSE_ATOMS:
        raise OptimizationError(f"qfi_numeric guarded to N <= {MAX_DENSE_ATOMS}")
    evals, evecs = np.linalg.eigh(state.matrix)
    evals = np.clip(evals, 0.0, None)
    sz = sz_eigenvalues(state.n_atoms)
    mat = evecs.conj().T @ (sz[:, None] * evecs)
    pair_sum = evals[:, None] + evals[None, :]
    pair_diff = evals[:, None] - evals[None, :]
    mask = pair_sum > QFI_EIG_CUTOFF
    weights = np.zeros_like(pair_sum)
    weights[mask] = pair_diff[mask] ** 2 / pair_sum[mask]
    return float(2.0 * np.sum(weights * np.abs(mat) ** 2))


def qfi_ghz_closed(params: EnsembleParams, T: float) -> float:
    """Closed-form QFI of the decayed ghz state,
    2 N^2 e^{-(Gamma+gamma)NT} / [1 + (1-e^{-Gamma T})^N + e^{-Gamma N T}]."""
    if T < 0:
        raise OptimizationError("T must be >= 0")
    n = params.n_atoms
    s = math.exp(-params.gamma_decay * T)
    return 2.0 * n * n * math.exp(-params.gamma_total * n * T) / (1.0 + (1.0 - s) ** n + s**n)


def freq_variance(delta_phi_sq: float, T: float, tau: float) -> float:
    """Delta_omega^2 = Delta_phi^2 / (T tau)."""
    if T <= 0 or tau <= 0:
        raise OptimizationError(f"T and tau must be positive, got T={T}, tau={tau}")
    return delta_phi_sq / (T * tau)


def _golden_min_log(fn, lo: float, hi: float, rel_tol: float):
    """Golden-section minimum of fn(exp(u)) on [log lo, log hi]."""
    a, b = math.log(lo), math.log(hi)
    tol = max(rel_tol, 1e-14)
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = fn(math.exp(c)), fn(math.exp(d))
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = fn(math.exp(c))
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = fn(math.exp(d))
    x = math.exp(0.5 * (a + b))
    return x, fn(x)


def minimize_over_T(curve_fn, bracket, rel_tol: float = 1e-6, coarse_points: int = 64):
    """Minimize a smooth positive curve over T on a log-spaced bracket.

    A coarse grid validates unimodality (and brackets the minimum); the
    enclosing cell pair is then refined by golden-section search in log T.
    """
    t_lo, t_hi = bracket
    if not 0 < t_lo < t_hi:
        raise OptimizationError(f"invalid bracket {bracket}")
    grid = np.geomspace(t_lo, t_hi, coarse_points)
    vals = np.array([curve_fn(t) for t in grid])
    if np.any(np.isnan(vals)):
        raise OptimizationError("curve evaluated to nan on the bracket")
    idx = int(np.argmin(vals))
    if not np.isfinite(vals[idx]):
        raise OptimizationError("curve is non-finite everywhere on the bracket")
    if idx == 0 or idx == coarse_points - 1:
        raise OptimizationError(f"minimum at bracket edge T={grid[idx]:.3g}; widen the bracket")
    interior = [
        i
        for i in range(1, coarse_points - 1)
        if vals[i] <= vals[i - 1] and vals[i] <= vals[i + 1]
    ]
    basins = [i for i in interior if not (i - 1 in interior and vals[i - 1] == vals[i])]
    if len(basins) > 1:
        raise OptimizationError(f"multiple coarse minima at T={[f'{grid[i]:.3g}' for i in basins]}")
    return _golden_min_log(curve_fn, grid[idx - 1], grid[idx + 1], rel_tol)


def optimize_sss(params: EnsembleParams, T: float, mu_points: int = 96, rel_tol: float = 1e-7):
    """Best twisting strength for the squeezed protocol at fixed T.

    Returns (mu_opt, Delta_phi^2).  The curve is scanned on a log grid over
    (0, pi] and refined by golden section; a boundary minimum at vanishing mu
    (strong decoherence, squeezing useless) is refined within the lowest cell.
    """
    if params.n_atoms < 2:
        raise OptimizationError("optimize_sss needs n_atoms >= 2")

    def phase_var(mu):
        return phase_uncertainty_closed(ProtocolSpec("sss", params, twist_mu=mu), T)

    grid = np.geomspace(1e-7 * math.pi, math.pi, mu_points)
    vals = np.array([phase_var(mu) for mu in grid])
    idx = int(np.argmin(vals))
    lo = grid[max(idx - 1, 0)]
    hi = grid[min(idx + 1, mu_points - 1)]
    mu_opt, best = _golden_min_log(phase_var, lo, hi, rel_tol)
    return mu_opt, best


def sql_variance(params: EnsembleParams, tau: float) -> float:
    """Uncorrelated-ensemble limit e (Gamma + gamma) / (N tau)."""
    return math.e * params.gamma_total / (params.n_atoms * tau)


def _freq_curve(spec_factory, params: EnsembleParams, tau: float):
    def curve(T):
        return freq_variance(spec_factory(T), T, tau)

    return curve


def optimal_frequency_variance(kind: str, params: EnsembleParams, tau: float = 1.0, rel_tol: float = 1e-6):
    """Minimize Delta_omega^2 over T for one protocol.

    Returns (t_min, min variance, mu_opt or None).  For the squeezed protocol
    the twisting strength is re-optimized at every T.
    """
    c = params.gamma_total
    if c <= 0:
        raise OptimizationError("zero-decoherence sensitivity has no finite optimal T")
    n = params.n_atoms
    # ghz-family curves blow up on the (Gamma+gamma)*N*T scale, css/sss on
    # (Gamma+gamma)*T; both optima sit well inside these windows
    if kind in ("parity_ghz", "linear_ghz", "heralded_ghz"):
        bracket = (1e-2 / (n * c), 50.0 / (n * c))
    else:
        bracket = (1e-3 / c, 50.0 / c)
    if kind == "sss":
        def phase_var(T):
            return optimize_sss(params, T)[1]
    else:
        def phase_var(T):
            return phase_uncertainty_closed(ProtocolSpec(kind, params), T)
    t_min, best = minimize_over_T(_freq_curve(phase_var, params, tau), bracket, rel_tol=rel_tol)
    mu_opt = optimize_sss(params, t_min)[0] if kind == "sss" else None
    return t_min, best, mu_opt


def sweep_vs_N(kinds, n_values, gamma_decay: float, gamma_dephase: float = 0.0, tau: float = 1.0):
    """Optimal-sensitivity sweep: Delta_omega_min / Delta_omega_SQL per (N, protocol).

    The ratio is independent of the decay rate because both numerator and
    denominator scale with it.
    """
    rows = []
    for n in n_values:
        params = EnsembleParams(int(n), gamma_decay, gamma_dephase)
        for kind in kinds:
            if kind == "sss" and params.n_atoms < 2:
                continue
            try:
                t_min, var_min, mu_opt = optimal_frequency_variance(kind, params, tau)
                ratio = math.sqrt(var_min / sql_variance(params, tau))
                rows.append(SweepRow(params.n_atoms, kind, t_min, ratio, True, mu_opt))
            except OptimizationError:
                rows.append(SweepRow(params.n_atoms, kind, math.nan, math.nan, False, None))
    return rows


def bounds(params: EnsembleParams, tau: float) -> BoundSet:
    """Uncorrelated limit, asymptotic lower bound, and minimized ghz bound."""
    c = params.gamma_total
    if c <= 0:
        raise OptimizationError("bounds diverge without decoherence (optimal T is unbounded)")
    _, ghz_min, _ = optimal_frequency_variance("heralded_ghz", params, tau)
    return BoundSet(
        sql=sql_variance(params, tau),
        asymptotic=c / (params.n_atoms * tau),
        ghz_qcrb_min=ghz_min,
    )


def sensitivity_curve(spec: ProtocolSpec, times, tau: float = 1.0) -> SensitivityCurve:
    """Sample Delta_phi^2 and Delta_omega^2 over a T grid and attach the
    minimizer found on the sampled bracket."""
    times = np.asarray(times, dtype=float)
    phase_var = np.array([phase_uncertainty_closed(spec, t) for t in times])
    freq_var = phase_var / (times * tau)
    t_min, min_var = minimize_over_T(
        lambda t: phase_uncertainty_closed(spec, t) / (t * tau), (times[0], times[-1])
    )
    return SensitivityCurve(spec, times, phase_var, freq_var, t_min, min_var)


def heralded_asymptote():
    """Large-N limit of the heralded protocol at gamma = 0.

    Returns (x_star, ratio) with x_star solving e^x (x - 1) = 1 and
    ratio = Delta_omega / Delta_omega_SQL = 1/sqrt(2 e (x_star - 1)).
    """
    lo, hi = 1.0 + 1e-9, 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if math.exp(mid) * (mid - 1.0) < 1.0:
            lo = mid
        else:
            hi = mid
    x_star = 0.5 * (lo + hi)
    return x_star, 1.0 / math.sqrt(2.0 * math.e * (x_star - 1.0))
