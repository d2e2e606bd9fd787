"""Interrogation protocols: outcome statistics, estimators, and single-shot
phase uncertainty.

Protocol kinds
  css          Ramsey with an uncorrelated ensemble, S_y readout at phi0 = 0.
  sss          Same readout on a one-axis-twisted squeezed state.
  parity_ghz   ghz state with a parity readout, phi0 = pi/(2N).
  linear_ghz   ghz-class state, entangling readout pulse, linear estimator.
  heralded_ghz Same measurement with the nonlinear keep-only-extremes
               estimator whose outcomes +-N/2 herald decay-free runs.

All distributions are expressed over the physical phase phi; the working
point enters as the frame offset at which estimators are linearized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channels import ChannelParams, DensityState, evolve_oracle, rotate_density
from .spin import (
    MAX_DENSE_ATOMS,
    EnsembleParams,
    build_sss,
    sss_moments,
    sz_eigenvalues,
)

PROTOCOL_KINDS = ("css", "sss", "parity_ghz", "linear_ghz", "heralded_ghz")
GHZ_FAMILY = ("parity_ghz", "linear_ghz", "heralded_ghz")

PROB_TOL = 1e-10


class ProtocolError(ValueError):
    """Invalid protocol configuration, outcome label, or estimator."""


@dataclass(frozen=True)
class ProtocolSpec:
    """Interrogation protocol selection plus its working point."""

    kind: str
    params: EnsembleParams
    twist_mu: float | None = None
    working_point: float | None = None

    def __post_init__(self):
        if self.kind not in PROTOCOL_KINDS:
            raise ProtocolError(f"unknown protocol kind {self.kind!r}")
        if self.kind == "sss":
            if self.twist_mu is None or not 0.0 < self.twist_mu <= math.pi:
                raise ProtocolError("sss requires twist_mu in (0, pi]")
            if self.params.n_atoms < 2:
                raise ProtocolError("sss requires at least two atoms")

    @property
    def phi0(self) -> float:
        """Working point: pi/(2N) for the ghz family, 0 for css/sss."""
        if self.working_point is not None:
            return self.working_point
        if self.kind in GHZ_FAMILY:
            return math.pi / (2.0 * self.params.n_atoms)
        return 0.0


@dataclass(frozen=True)
class OutcomeDistribution:
    """Probability table over measurement outcomes at fixed (phi, T)."""

    outcomes: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        outcomes = np.asarray(self.outcomes, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        if outcomes.shape != probs.shape:
            raise ProtocolError("outcomes and probs must have matching shapes")
        if np.any(probs < -PROB_TOL) or np.any(probs > 1.0 + PROB_TOL):
            raise ProtocolError("probabilities outside [0, 1]")
        if abs(probs.sum() - 1.0) > PROB_TOL:
            raise ProtocolError(f"probabilities sum to {probs.sum()}, not 1")
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "probs", np.clip(probs, 0.0, 1.0))

    def mean(self) -> float:
        return float(np.dot(self.outcomes, self.probs))

    def second_moment(self) -> float:
        return float(np.dot(self.outcomes**2, self.probs))


@dataclass(frozen=True)
class EstimatorSpec:
    """Outcome-to-phase rule: linear rescaling or the heralded nonlinear map."""

    kind: str
    slope: float
    offset: float

    def __post_init__(self):
        if self.kind not in ("linear", "heralded"):
            raise ProtocolError(f"unknown estimator kind {self.kind!r}")
        if self.kind == "linear" and self.slope == 0.0:
            raise ProtocolError("linear estimator requires a nonzero slope")


def _ghz_extreme_parts(params: EnsembleParams, T: float):
    n = params.n_atoms
    s = math.exp(-params.gamma_decay * T)
    background = 1.0 + (1.0 - s) ** n + s**n
    contrast = 2.0 * math.exp(-0.5 * params.gamma_total * n * T)
    return s, background, contrast


def heralded_distribution(params: EnsembleParams, phi: float, T: float) -> OutcomeDistribution:
    """Exact outcome table of the entangling-readout measurement.

    P(+-N/2) = (1/4)[1 + (1-e^{-Gamma T})^N + e^{-Gamma N T}
                     -+ 2 e^{-(Gamma+gamma)NT/2} cos(N phi)];
    the interior outcome x = N/2 - N_minus carries the phi-independent
    decay statistics
    (1/4) C(N, N_minus) [e^{-Gamma T (N-N_minus)} (1-e^{-Gamma T})^{N_minus}
                         + e^{-Gamma T N_minus} (1-e^{-Gamma T})^{N-N_minus}]
    with decaying exponentials, which is what normalization requires.
    """
    if T < 0:
        raise ProtocolError("T must be >= 0")
    n = params.n_atoms
    s, background, contrast = _ghz_extreme_parts(params, T)
    cos_term = contrast * math.cos(n * phi)
    outcomes = np.arange(n + 1) - n / 2.0
    probs = np.empty(n + 1)
    probs[0] = 0.25 * (background + cos_term)   # x = -N/2
    probs[n] = 0.25 * (background - cos_term)   # x = +N/2
    for k in range(1, n):
        probs[k] = 0.25 * math.comb(n, k) * (s**k * (1.0 - s) ** (n - k) + s ** (n - k) * (1.0 - s) ** k)
    return OutcomeDistribution(outcomes, probs)


def parity_signal(params: EnsembleParams, phi: float, T: float) -> float:
    """<Pi> = (-1)^N e^{-(Gamma+gamma)NT/2} cos(N phi)."""
    if T < 0:
        raise ProtocolError("T must be >= 0")
    n = params.n_atoms
    return (-1.0) ** n * math.exp(-0.5 * params.gamma_total * n * T) * math.cos(n * phi)


def parity_distribution(params: EnsembleParams, phi: float, T: float) -> OutcomeDistribution:
    """Two-outcome table P(+-1) = (1 +- <Pi>)/2, since Pi^2 = 1."""
    signal = parity_signal(params, phi, T)
    return OutcomeDistribution(np.array([-1.0, 1.0]), np.array([0.5 * (1.0 - signal), 0.5 * (1.0 + signal)]))


def _spin_readout_prob_up(params: EnsembleParams, phi: float, T: float) -> float:
    # per-atom probability of +1/2 in the S_y readout of a damped css
    return 0.5 * (1.0 + math.exp(-0.5 * params.gamma_total * T) * math.sin(phi))


def css_distribution(params: EnsembleParams, phi: float, T: float) -> OutcomeDistribution:
    """S_y readout of a damped css: the state stays a product state, so the
    collective projective outcome is the sum of i.i.d. per-atom readouts
    (exact for any N)."""
    n = params.n_atoms
    p_up = _spin_readout_prob_up(params, phi, T)
    probs = np.array([math.comb(n, k) * p_up**k * (1.0 - p_up) ** (n - k) for k in range(n + 1)])
    return OutcomeDistribution(np.arange(n + 1) - n / 2.0, probs)


def _sy_readout_distribution(rho: DensityState) -> np.ndarray:
    """S_y projective probabilities binned by eigenvalue, via a pi/2 pulse."""
    n = rho.n_atoms
    rotated = rotate_density(rho, math.pi / 2.0, "x")
    pops = np.diag(rotated.matrix).real
    m = sz_eigenvalues(n)
    probs = np.zeros(n + 1)
    np.add.at(probs, (m + n / 2.0).astype(int), pops)
    return probs


def sss_distribution(spec: ProtocolSpec, phi: float, T: float) -> OutcomeDistribution:
    """Exact S_y outcome table for the squeezed protocol (dense pipeline)."""
    n = spec.params.n_atoms
    if n > MAX_DENSE_ATOMS:
        raise ProtocolError(f"exact sss distribution guarded to N <= {MAX_DENSE_ATOMS}")
    rho = DensityState.from_pure(build_sss(n, spec.twist_mu))
    evolved = evolve_oracle(rho, ChannelParams(spec.params, T, phi))
    return OutcomeDistribution(np.arange(n + 1) - n / 2.0, _sy_readout_distribution(evolved))


def outcome_distribution(spec: ProtocolSpec, phi: float, T: float) -> OutcomeDistribution:
    """Dispatch to the protocol's exact outcome table."""
    if spec.kind in ("heralded_ghz", "linear_ghz"):
        return heralded_distribution(spec.params, phi, T)
    if spec.kind == "parity_ghz":
        return parity_distribution(spec.params, phi, T)
    if spec.kind == "css":
        return css_distribution(spec.params, phi, T)
    return sss_distribution(spec, phi, T)


def signal_slope(spec: ProtocolSpec, T: float) -> float:
    """d<X>/dphi at the working point, per protocol."""
    params = spec.params
    n = params.n_atoms
    c = params.gamma_total
    if spec.kind in ("heralded_ghz", "linear_ghz"):
        return 0.5 * n * n * math.exp(-0.5 * c * n * T) * math.sin(n * spec.phi0)
    if spec.kind == "parity_ghz":
        return -((-1.0) ** n) * n * math.exp(-0.5 * c * n * T) * math.sin(n * spec.phi0)
    if spec.kind == "css":
        return math.exp(-0.5 * c * T) * 0.5 * n * math.cos(spec.phi0)
    moments = sss_moments(n, spec.twist_mu)
    return math.exp(-0.5 * c * T) * moments.mean_sx * math.cos(spec.phi0)


def make_estimator(spec: ProtocolSpec, T: float) -> EstimatorSpec:
    """Estimator matched to the protocol at interrogation time T."""
    kind = "heralded" if spec.kind == "heralded_ghz" else "linear"
    return EstimatorSpec(kind=kind, slope=signal_slope(spec, T), offset=spec.phi0)


def estimate_phase(est: EstimatorSpec, outcome: float, params: EnsembleParams, T: float) -> float:
    """Map one measurement outcome to a phase estimate.

    Linear: x / slope + phi0.  Heralded: +-e^{(Gamma+gamma)NT/2} / N for the
    extreme outcomes (the 1/N restores local unbiasedness, i.e. unit response
    slope), phi0 for every heralded-error outcome.
    """
    n = params.n_atoms
    if est.kind == "linear":
        if not np.isfinite(outcome):
            raise ProtocolError(f"invalid outcome {outcome!r}")
        return outcome / est.slope + est.offset
    half = n / 2.0
    if abs(abs(outcome) - half) < 1e-9:
        amplitude = math.exp(0.5 * params.gamma_total * n * T) / n
        return est.offset + math.copysign(amplitude, outcome)
    shifted = outcome + half
    if abs(shifted - round(shifted)) > 1e-9 or not 0 <= round(shifted) <= n:
        raise ProtocolError(f"outcome {outcome} not on the spin-projection grid for N={n}")
    return est.offset


def estimator_response(spec: ProtocolSpec, est: EstimatorSpec, T: float, phi: float) -> float:
    """Mean estimate sum_x P(x|phi) phi_est(x) at the given phase."""
    dist = outcome_distribution(spec, phi, T)
    return float(sum(p * estimate_phase(est, x, spec.params, T) for x, p in zip(dist.outcomes, dist.probs)))


def phase_uncertainty_mse(spec: ProtocolSpec, est: EstimatorSpec, T: float, bias_tol: float = 1e-6) -> float:
    """Single-shot mean-square error sum_x P(x|phi0,T) [phi_est(x) - phi0]^2.

    Valid only for locally unbiased estimators, which is asserted through a
    finite-difference check of the response slope at the working point.
    """
    phi0 = spec.phi0
    # step keeps the sinc truncation ~(Nh)^2/6 below the tolerance while
    # staying large enough that the strongly damped fringe contrast does not
    # drown in roundoff
    h = 1e-3 / spec.params.n_atoms
    slope = (estimator_response(spec, est, T, phi0 + h) - estimator_response(spec, est, T, phi0 - h)) / (2.0 * h)
    if abs(slope - 1.0) > bias_tol:
        raise ProtocolError(f"estimator response slope {slope} deviates from 1 at the working point")
    dist = outcome_distribution(spec, phi0, T)
    dev = np.array([estimate_phase(est, x, spec.params, T) - phi0 for x in dist.outcomes])
    return float(np.dot(dist.probs, dev**2))


def _exp_safe(x: float) -> float:
    # saturate to inf instead of raising on overflow (steep T sweeps)
    return math.exp(x) if x < 709.0 else math.inf


def phase_uncertainty_closed(spec: ProtocolSpec, T: float) -> float:
    """Closed-form single-shot phase variance per protocol kind."""
    if T < 0:
        raise ProtocolError("T must be >= 0")
    params = spec.params
    n = params.n_atoms
    c = params.gamma_total
    if spec.kind == "css":
        return _exp_safe(c * T) / n
    if spec.kind == "sss":
        moments = sss_moments(n, spec.twist_mu)
        denom = moments.mean_sx**2
        if denom == 0.0:
            return math.inf
        return (0.25 * n * (_exp_safe(c * T) - 1.0) + moments.var_sy) / denom
    if spec.kind == "parity_ghz":
        return _exp_safe(c * n * T) / n**2
    s = math.exp(-params.gamma_decay * T)
    if spec.kind == "linear_ghz":
        return _exp_safe(c * n * T) / n**3 * (1.0 + (n - 1) * (1.0 - 2.0 * s + 2.0 * s * s))
    # heralded: reciprocal of the ghz quantum Fisher information
    return _exp_safe(c * n * T) / (2.0 * n * n) * (1.0 + s**n + (1.0 - s) ** n)


class ProtocolSampler:
    """Per-(protocol, T) sampling front end for Monte-Carlo loops.

    Precomputes everything phi-independent so that drawing one outcome per
    clock cycle is cheap.  Exact for the ghz family and css at any N and for
    sss up to the dense guard; larger squeezed ensembles fall back to a
    Gaussian model of the S_y readout built from the decayed moments.
    """

    def __init__(self, spec: ProtocolSpec, T: float):
        self.spec = spec
        self.T = float(T)
        params = spec.params
        n = params.n_atoms
        self.n_atoms = n
        self.kind = spec.kind
        self.contrast = math.exp(-0.5 * params.gamma_total * T)
        if spec.kind in ("heralded_ghz", "linear_ghz"):
            s, background, contrast = _ghz_extreme_parts(params, T)
            interior = np.array(
                [0.25 * math.comb(n, k) * (s**k * (1.0 - s) ** (n - k) + s ** (n - k) * (1.0 - s) ** k) for k in range(1, n)]
            )
            self._background = background
            self._ghz_contrast = contrast
            self._interior_outcomes = np.arange(1, n) - n / 2.0
            self._interior_cum = np.cumsum(interior)
            self._interior_total = float(self._interior_cum[-1]) if interior.size else 0.0
        elif spec.kind == "sss":
            if n <= MAX_DENSE_ATOMS:
                self._build_fourier_table()
            else:
                moments = sss_moments(n, spec.twist_mu)
                damp = self.contrast**2
                self._gauss_mean_amp = self.contrast * moments.mean_sx
                self._gauss_std = math.sqrt(0.25 * n * (1.0 - damp) + damp * moments.var_sy)

    def _build_fourier_table(self):
        # P(m|phi) is a trig polynomial of degree N; 2N+1 uniform samples
        # recover its Fourier coefficients exactly.
        n = self.n_atoms
        m_grid = 2 * n + 1
        table = np.empty((m_grid, n + 1))
        for j in range(m_grid):
            phi_j = 2.0 * math.pi * j / m_grid
            table[j] = sss_distribution(self.spec, phi_j, self.T).probs
        coeff = np.fft.fft(table, axis=0) / m_grid
        self._fourier_coeff = coeff
        ks = np.fft.fftfreq(m_grid, d=1.0 / m_grid)
        self._fourier_k = ks
        self._sss_outcomes = np.arange(n + 1) - n / 2.0

    def probabilities(self, phi: float) -> OutcomeDistribution:
        """Exact distribution at the given phase (not the Gaussian path)."""
        if self.kind == "sss" and self.n_atoms <= MAX_DENSE_ATOMS:
            weights = np.exp(1j * self._fourier_k * phi)
            probs = np.real(weights @ self._fourier_coeff)
            probs = np.clip(probs, 0.0, None)
            return OutcomeDistribution(self._sss_outcomes, probs / probs.sum())
        return outcome_distribution(self.spec, phi, self.T)

    def sample(self, phi: float, rng: np.random.Generator) -> float:
        n = self.n_atoms
        if self.kind in ("heralded_ghz", "linear_ghz"):
            cos_term = self._ghz_contrast * math.cos(n * phi)
            p_minus = 0.25 * (self._background + cos_term)
            p_plus = 0.25 * (self._background - cos_term)
            u = rng.random()
            if u < p_minus:
                return -n / 2.0
            if u < p_minus + p_plus or self._interior_total == 0.0:
                return n / 2.0
            idx = int(np.searchsorted(self._interior_cum, u - p_minus - p_plus, side="right"))
            return float(self._interior_outcomes[min(idx, len(self._interior_outcomes) - 1)])
        if self.kind == "parity_ghz":
            p_plus = 0.5 * (1.0 + parity_signal(self.spec.params, phi, self.T))
            return 1.0 if rng.random() < p_plus else -1.0
        if self.kind == "css":
            p_up = 0.5 * (1.0 + self.contrast * math.sin(phi))
            return rng.binomial(n, p_up) - n / 2.0
        if self.n_atoms <= MAX_DENSE_ATOMS:
            dist = self.probabilities(phi)
            u = rng.random()
            idx = int(np.searchsorted(np.cumsum(dist.probs), u, side="right"))
            return float(dist.outcomes[min(idx, dist.outcomes.size - 1)])
        return float(rng.normal(self._gauss_mean_amp * math.sin(phi), self._gauss_std))

    def is_discard(self, outcome: float) -> bool:
        """Heralded-error outcome producing no feedback signal."""
        return self.kind == "heralded_ghz" and abs(abs(outcome) - self.n_atoms / 2.0) > 1e-9


def sample_outcome(spec: ProtocolSpec, phi: float, T: float, rng) -> float:
    """Draw one outcome; rng is a seed or a numpy Generator."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return ProtocolSampler(spec, T).sample(phi, rng)
