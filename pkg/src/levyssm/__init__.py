"""Heavy-tailed Levy-driven linear state space models.

Forward simulation through truncated conditionally Gaussian shot-noise
series, and Bayesian state inference through a Rao-Blackwellised particle
filter that marginalises the driving noise's mean and variance in closed
form.
"""

from .kalman import (
    DegenerateObservationError,
    GaussianBelief,
    IGPrior,
    MarginalAccumulator,
    accumulate,
    init_belief,
    log_marginal,
    posterior_sigma2,
    predict,
    predict_fixed,
    update,
)
from .sde import (
    LangevinSDE,
    LinearSDE,
    TransitionStats,
    compute_m_S,
    drift_compensator,
    ft_kernel,
    gaussian_sde_cov,
    mat_exp,
    mean_ft,
    residual_cov_bare,
    transition_stats,
    unit_compensator,
)
from .smc import (
    FilterConfig,
    FilterFailureError,
    FilterOutput,
    Particle,
    ess,
    propose_and_weight,
    resample_systematic,
    run_filter,
)
from .ssm import (
    ApproximationCase,
    ExtendedTransition,
    ObservationModel,
    TransitionContext,
    build_transition,
    forward_simulate,
    nu_factor,
)
from .stable import (
    JumpCountError,
    JumpRecord,
    JumpSet,
    StableParams,
    centering_drift,
    driving_path_from_jumps,
    ks_critical_value,
    ks_statistic,
    sample_jump_set,
    sample_poisson_epochs,
    sample_unit_increments,
    simulate_driving_path,
)

__version__ = "0.1.0"
