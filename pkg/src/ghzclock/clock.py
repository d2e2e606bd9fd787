"""Closed-loop atomic-clock Monte Carlo: noisy local oscillator, sampled
Ramsey interrogations, servo feedback, and Allan-deviation analysis.

Cycles are dead-time free: cycle i interrogates for T seconds, accumulates
the phase (lo_offset_i - correction_i) * T plus the working-point offset,
samples one outcome, and feeds the phase estimate back through a two-term
(proportional + slow integral) servo.  Heralded-error outcomes apply no
correction for that cycle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .protocols import EstimatorSpec, ProtocolSampler, ProtocolSpec, estimate_phase

LO_NOISE_KINDS = ("flicker", "white", "none")

# Ca+ optical clock working values: 1/Gamma ~= 1.1 s lifetime,
# 411.042 THz transition, flicker-limited laser with Z ~= 7.5 s
CA_PLUS_PRESET = {
    "gamma_decay": 1.0 / 1.1,
    "gamma_dephase": 0.0,
    "carrier": 2.0 * math.pi * 411.042e12,
    "coherence_time": 7.5,
    "noise_kind": "flicker",
}


class ClockError(ValueError):
    """Invalid clock configuration or analysis request."""


@dataclass(frozen=True)
class LOModel:
    """Free-running local-oscillator noise model."""

    noise_kind: str = "none"
    flicker_floor: float = 0.0
    coherence_time: float | None = None
    carrier: float = CA_PLUS_PRESET["carrier"]

    def __post_init__(self):
        if self.noise_kind not in LO_NOISE_KINDS:
            raise ClockError(f"unknown noise kind {self.noise_kind!r}")
        if self.carrier <= 0:
            raise ClockError("carrier frequency must be positive")
        if self.noise_kind == "flicker" and not (self.coherence_time and self.coherence_time > 0):
            raise ClockError("flicker noise requires a positive coherence_time")
        if self.noise_kind == "white" and self.flicker_floor <= 0:
            raise ClockError("white noise requires flicker_floor (= sigma_y at 1 s) > 0")


@dataclass(frozen=True)
class ServoConfig:
    """Two-term feedback: proportional on the estimate plus slow integrator.

    Defaults are tuned for hop-free locking with a flat closed-loop noise
    spectrum in the Allan fit region; the integrator is off by default since
    its noise bump lands inside the fit decade at short run lengths.
    """

    primary_gain: float = 0.15
    integral_gain: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.primary_gain < 2.0:
            raise ClockError("primary_gain must lie in (0, 2)")
        if self.integral_gain < 0.0:
            raise ClockError("integral_gain must be >= 0")


@dataclass(frozen=True)
class ClockTrace:
    """Per-cycle record of one closed-loop run.

    correction holds the total servo correction in effect during the cycle
    (rad/s), so lo_offset - correction is the residual frequency the clock
    actually ran at.
    """

    true_phase: np.ndarray
    outcome: np.ndarray
    estimate: np.ndarray
    correction: np.ndarray
    lo_offset: np.ndarray
    cycle_period: float
    n_atoms: int
    working_point: float
    carrier: float
    seed: int | None = None

    @property
    def n_cycles(self) -> int:
        return self.true_phase.size

    def fractional_frequency(self) -> np.ndarray:
        """In-loop fractional frequency y = (lo_offset - correction)/omega0."""
        return (self.lo_offset - self.correction) / self.carrier

    def discard_fraction(self) -> float:
        """Share of cycles that produced no feedback (heralded errors)."""
        return float(np.mean(np.isnan(self.estimate)))


@dataclass(frozen=True)
class AllanEstimate:
    """Overlapping Allan deviation plus the white-noise-floor extrapolation."""

    taus: np.ndarray
    sigma_y: np.ndarray
    sigma_y_at_1s: float
    hop_count: int

    def __post_init__(self):
        if np.any(np.diff(self.taus) <= 0):
            raise ClockError("taus must be strictly increasing")
        if np.any(self.sigma_y < 0):
            raise ClockError("sigma_y must be nonnegative")


def _flicker_bank(n_cycles: int, T: float, coherence_time: float, rng: np.random.Generator) -> np.ndarray:
    """Octave bank of first-order low-pass filtered white noise.

    Corner frequencies are octave-spaced across (1/(n_cycles T), 1/T); equal
    per-octave variance yields a 1/f spectrum inside the band.  The overall
    scale is calibrated analytically so the rms phase accumulated over the
    coherence time equals 1 rad.
    """
    n_octaves = int(math.floor(math.log2(n_cycles)))
    if n_octaves < 3:
        raise ClockError(f"flicker band needs >= 3 octaves, got {n_octaves} (too few cycles)")
    total = np.zeros(n_cycles)
    ar_coeffs = []
    for j in range(n_octaves):
        f_corner = 1.0 / (T * 2.0 ** (j + 1))
        a = math.exp(-2.0 * math.pi * f_corner * T)
        ar_coeffs.append(a)
        sigma = math.sqrt(1.0 - a * a)  # unit stationary variance per octave
        x0 = rng.standard_normal()
        white = rng.standard_normal(n_cycles)
        x, _ = lfilter([sigma], [1.0, -a], white, zi=[a * x0])
        total += x
    # analytic variance of the phase accumulated over the coherence window
    m_win = max(1, min(n_cycles, int(round(coherence_time / T))))
    acc_var = 0.0
    for a in ar_coeffs:
        if m_win == 1:
            acc_var += 1.0
        else:
            acc_var += m_win * (1.0 + a) / (1.0 - a) - 2.0 * a * (1.0 - a**m_win) / (1.0 - a) ** 2
    scale = 1.0 / (T * math.sqrt(acc_var))
    return total * scale


def gen_lo_noise(model: LOModel, n_cycles: int, T: float, seed) -> np.ndarray:
    """Per-cycle mean frequency offsets of the free-running LO in rad/s."""
    if n_cycles < 1:
        raise ClockError("n_cycles must be >= 1")
    if T <= 0:
        raise ClockError("T must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if model.noise_kind == "none":
        return np.zeros(n_cycles)
    if model.noise_kind == "white":
        sigma_omega = model.flicker_floor * model.carrier / math.sqrt(T)
        return rng.normal(0.0, sigma_omega, n_cycles)
    return _flicker_bank(n_cycles, T, model.coherence_time, rng)


def run_clock(
    spec: ProtocolSpec,
    est: EstimatorSpec,
    lo: LOModel,
    servo: ServoConfig,
    T: float,
    n_cycles: int,
    seed,
) -> ClockTrace:
    """Simulate one dead-time-free closed-loop clock run.

    Heralded-error cycles store estimate = nan and leave the correction
    untouched.  Deterministic for a fixed (configuration, seed).
    """
    root = np.random.SeedSequence(seed)
    noise_rng, sample_rng = (np.random.default_rng(s) for s in root.spawn(2))
    lo_offsets = gen_lo_noise(lo, n_cycles, T, noise_rng)
    sampler = ProtocolSampler(spec, T)
    params = spec.params
    phi0 = spec.phi0
    g_p = servo.primary_gain
    g_i = servo.integral_gain

    true_phase = np.empty(n_cycles)
    outcomes = np.empty(n_cycles)
    estimates = np.empty(n_cycles)
    corrections = np.empty(n_cycles)

    correction = 0.0
    integrator = 0.0
    sample = sampler.sample
    is_discard = sampler.is_discard
    for i in range(n_cycles):
        phi = (lo_offsets[i] - correction) * T + phi0
        x = sample(phi, sample_rng)
        true_phase[i] = phi
        outcomes[i] = x
        corrections[i] = correction
        if is_discard(x):
            estimates[i] = math.nan
            continue
        phi_est = estimate_phase(est, x, params, T)
        estimates[i] = phi_est
        err = (phi_est - phi0) / T
        integrator += err
        correction += g_p * err + g_i * integrator

    return ClockTrace(
        true_phase=true_phase,
        outcome=outcomes,
        estimate=estimates,
        correction=corrections,
        lo_offset=lo_offsets,
        cycle_period=T,
        n_atoms=params.n_atoms,
        working_point=phi0,
        carrier=lo.carrier,
        seed=seed if isinstance(seed, int) else None,
    )


def overlapping_allan(y: np.ndarray, T: float, taus) -> tuple[np.ndarray, np.ndarray]:
    """Overlapping Allan deviation of a fractional-frequency series.

    Each requested tau must be an integer multiple of the sample period T.
    """
    y = np.asarray(y, dtype=float)
    phase = np.concatenate(([0.0], np.cumsum(y) * T))
    out_taus = []
    out_sigma = []
    for tau in taus:
        k = tau / T
        if abs(k - round(k)) > 1e-6:
            raise ClockError(f"tau {tau} is not a multiple of the cycle period {T}")
        k = int(round(k))
        if k < 1 or phase.size - 2 * k < 1:
            raise ClockError(f"insufficient samples for tau {tau}")
        diffs = phase[2 * k:] - 2.0 * phase[k:-k] + phase[: -2 * k]
        avar = 0.5 * np.mean(diffs**2) / (k * T) ** 2
        out_taus.append(k * T)
        out_sigma.append(math.sqrt(avar))
    return np.array(out_taus), np.array(out_sigma)


def extrapolate_floor(taus: np.ndarray, sigma_y: np.ndarray) -> float:
    """sigma_y(1 s) extrapolated from the white-frequency region, i.e. the
    largest decade of tau, where sigma_y follows c/sqrt(tau).

    The servo shapes the in-loop noise, leaving a known O(1/tau) transient on
    the Allan variance, so the fit model is avar * tau = c^2 + b/tau; the
    transient term absorbs the loop coloration and the white level c is
    returned.  With fewer than three usable points the plain c/sqrt(tau)
    average is used instead.
    """
    taus = np.asarray(taus, dtype=float)
    sigma_y = np.asarray(sigma_y, dtype=float)
    cutoff = taus.max() / 10.0
    mask = (taus >= cutoff) & (sigma_y > 0.0)
    if mask.sum() < 2:
        mask = sigma_y > 0.0
    if not np.any(mask):
        return 0.0
    t_fit = taus[mask]
    level = sigma_y[mask] ** 2 * t_fit
    if t_fit.size < 3:
        return float(math.sqrt(np.mean(level)))
    design = np.column_stack([np.ones_like(t_fit), 1.0 / t_fit])
    coeff, *_ = np.linalg.lstsq(design, level, rcond=None)
    return float(math.sqrt(max(coeff[0], 0.0)))


def allan_deviation(trace: ClockTrace, taus) -> AllanEstimate:
    """Allan analysis of the in-loop fractional frequency of one run."""
    out_taus, sigma = overlapping_allan(trace.fractional_frequency(), trace.cycle_period, taus)
    hops, _ = detect_fringe_hops(trace)
    return AllanEstimate(
        taus=out_taus,
        sigma_y=sigma,
        sigma_y_at_1s=extrapolate_floor(out_taus, sigma),
        hop_count=hops,
    )


def adev_prediction(delta_phi: float, T: float, carrier: float, tau: float = 1.0) -> float:
    """Dead-time-free theory line sigma_y(tau) = Delta_phi / (omega0 sqrt(T tau))."""
    return delta_phi / (carrier * math.sqrt(T * tau))


def detect_fringe_hops(trace: ClockTrace, window: int = 100, capture_fraction: float = 0.125):
    """Count servo transitions between adjacent interference fringes.

    The running mean (window cycles) of the tracking error phi_true - phi0 is
    compared against the fringe grid k * 2 pi / N.  Leaving the current basin
    (excursion beyond pi/N) arms the detector; a hop is recorded when the
    windowed mean then enters the capture band of a different fringe center
    (capture_fraction * fringe spacing, default pi/(4N)).  Returns
    (hop_count, cycle indices).
    """
    n = trace.n_atoms
    spacing = 2.0 * math.pi / n
    half_basin = 0.5 * spacing
    capture = capture_fraction * spacing
    err = trace.true_phase - trace.working_point
    if err.size < window:
        return 0, []
    kernel = np.ones(window) / window
    running = np.convolve(err, kernel, mode="valid")
    current = 0.0
    armed = False
    hops = []
    for i, r in enumerate(running):
        if not armed:
            if abs(r - current) > half_basin:
                armed = True
        if armed:
            nearest = round(r / spacing) * spacing
            if abs(r - nearest) < capture and nearest != current:
                hops.append(i + window - 1)
                current = nearest
                armed = False
            elif abs(r - current) <= capture:
                armed = False
    return len(hops), hops
