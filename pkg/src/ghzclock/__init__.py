"""Entanglement-enhanced Ramsey frequency metrology under spontaneous decay.

Collective-spin protocols (uncorrelated, squeezed, and ghz-based with parity,
linear, or heralded readout), their exact decoherence channels and sensitivity
bounds, and a closed-loop atomic-clock Monte Carlo with Allan-deviation
analysis.  Every closed form is cross-validated against a brute-force
density-matrix oracle (see ghzclock.verify).
"""

from .channels import (
    ChannelParams,
    DensityState,
    evolve_ghz_analytic,
    evolve_moments,
    evolve_oracle,
)
from .clock import (
    CA_PLUS_PRESET,
    AllanEstimate,
    ClockTrace,
    LOModel,
    ServoConfig,
    allan_deviation,
    detect_fringe_hops,
    adev_prediction,
    gen_lo_noise,
    run_clock,
)
from .protocols import (
    EstimatorSpec,
    OutcomeDistribution,
    ProtocolSampler,
    ProtocolSpec,
    estimate_phase,
    heralded_distribution,
    make_estimator,
    outcome_distribution,
    parity_signal,
    phase_uncertainty_closed,
    phase_uncertainty_mse,
    sample_outcome,
)
from .sensitivity import (
    BoundSet,
    SensitivityCurve,
    SweepRow,
    bounds,
    freq_variance,
    heralded_asymptote,
    minimize_over_T,
    optimize_sss,
    qfi_ghz_closed,
    qfi_numeric,
    sweep_vs_N,
)
from .spin import (
    EnsembleParams,
    PureState,
    SpinMoments,
    apply_oat,
    apply_rotation,
    build_sss,
    build_state,
    sss_moments,
    u_ghz,
)

__version__ = "0.1.0"
