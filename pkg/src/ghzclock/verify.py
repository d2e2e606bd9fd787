"""Oracle cross-validation: every closed form against the brute-force
density-matrix pipeline.

Each check draws random (N, Gamma, gamma, T, phi) tuples and reports the
worst deviation between a closed-form quantity and its independently
computed dense-matrix counterpart.  Used by the test suite and by the
command-line `verify` command.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channels import ChannelParams, DensityState, evolve_ghz_analytic, evolve_oracle
from .protocols import (
    ProtocolSpec,
    heralded_distribution,
    make_estimator,
    parity_signal,
    phase_uncertainty_closed,
    phase_uncertainty_mse,
)
from .sensitivity import qfi_ghz_closed, qfi_numeric
from .spin import EnsembleParams, PureState, build_state, sz_eigenvalues, u_ghz

PROB_TOL = 1e-10
MATRIX_TOL = 1e-10
QFI_REL_TOL = 1e-8
MSE_REL_TOL = 1e-10


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_deviation: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tolerance


def _draw(rng, n_max):
    n = int(rng.integers(1, n_max + 1))
    params = EnsembleParams(n, rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0))
    T = rng.uniform(0.0, 1.5)
    phi = rng.uniform(-math.pi, math.pi)
    return params, T, phi


def heralded_outcome_probs_oracle(params: EnsembleParams, phi: float, T: float) -> np.ndarray:
    """Brute-force pipeline: entangling pulse on the ground state, exact
    channel, inverse pulse, S_z-binned populations."""
    n = params.n_atoms
    pulse = u_ghz(n)
    psi = PureState(pulse[:, 0])
    rho = evolve_oracle(DensityState.from_pure(psi), ChannelParams(params, T, phi))
    final = pulse.conj().T @ rho.matrix @ pulse
    pops = np.diag(final).real
    probs = np.zeros(n + 1)
    np.add.at(probs, (sz_eigenvalues(n) + n / 2.0).astype(int), pops)
    return probs


def parity_expectation_oracle(params: EnsembleParams, phi: float, T: float) -> float:
    """Tr(Pi rho) on the exactly evolved ghz state."""
    n = params.n_atoms
    rho = evolve_oracle(DensityState.from_pure(build_state("ghz", n)), ChannelParams(params, T, phi))
    dim = 2**n
    flip = np.zeros((dim, dim), dtype=complex)
    flip[np.arange(dim), dim - 1 - np.arange(dim)] = 1.0
    return rho.expectation((-1.0) ** n * flip)


def check_heralded_distribution(n_max=6, draws=50, seed=0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(draws):
        params, T, phi = _draw(rng, n_max)
        closed = heralded_distribution(params, phi, T).probs
        oracle = heralded_outcome_probs_oracle(params, phi, T)
        worst = max(worst, float(np.max(np.abs(closed - oracle))))
    return CheckResult("heralded distribution vs dense pipeline", worst, PROB_TOL)


def check_ghz_evolution(n_max=6, draws=50, seed=1) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(draws):
        params, T, phi = _draw(rng, n_max)
        cp = ChannelParams(params, T, phi)
        kraus = evolve_oracle(DensityState.from_pure(build_state("ghz", params.n_atoms)), cp)
        closed = evolve_ghz_analytic(cp)
        worst = max(worst, float(np.max(np.abs(kraus.matrix - closed.matrix))))
    return CheckResult("evolved ghz state closed form vs Kraus", worst, MATRIX_TOL)


def check_parity_signal(n_max=6, draws=50, seed=2) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(draws):
        params, T, phi = _draw(rng, n_max)
        worst = max(worst, abs(parity_signal(params, phi, T) - parity_expectation_oracle(params, phi, T)))
    return CheckResult("parity signal closed form vs oracle", worst, PROB_TOL)


def check_qfi(n_max=6, draws=50, seed=3) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(draws):
        params, T, phi = _draw(rng, n_max)
        closed = qfi_ghz_closed(params, T)
        numeric = qfi_numeric(evolve_ghz_analytic(ChannelParams(params, T, phi)))
        worst = max(worst, abs(numeric - closed) / closed)
    return CheckResult("ghz QFI numeric vs closed form (relative)", worst, QFI_REL_TOL)


def check_mse_saturates_qcrb(n_max=10, draws=100, seed=4) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(draws):
        n = int(rng.integers(1, n_max + 1))
        params = EnsembleParams(n, rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0))
        T = rng.uniform(0.0, 1.0)
        spec = ProtocolSpec("heralded_ghz", params)
        mse = phase_uncertainty_mse(spec, make_estimator(spec, T), T)
        qcrb = phase_uncertainty_closed(spec, T)
        worst = max(worst, abs(mse - qcrb) / qcrb)
    return CheckResult("heralded MSE saturates the ghz bound (relative)", worst, MSE_REL_TOL)


def run_verification(n_max: int = 6, draws: int = 50) -> list[CheckResult]:
    """All oracle-equivalence identities at the requested size."""
    return [
        check_heralded_distribution(n_max, draws),
        check_ghz_evolution(n_max, draws),
        check_parity_signal(n_max, draws),
        check_qfi(n_max, draws),
        check_mse_saturates_qcrb(max(n_max, 10), 2 * draws),
    ]
