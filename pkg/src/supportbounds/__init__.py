"""Sample-complexity bounds and exhaustive ML decoding for sparse support
recovery under linear and non-linear observation models."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ConfigMismatch,
    EnumerationCapExceeded,
    Infeasible,
    InfiniteThreshold,
    NoFiniteThreshold,
    QuadratureError,
    SideConditionFailed,
    SupportBoundsError,
    ZeroInformation,
)
from .model import (
    Bernoulli,
    Dataset,
    DiscreteDistribution,
    DiscreteIID,
    Fixed,
    Gaussian,
    GaussianFloor,
    GroupTestingNoiseless,
    LinearGaussian,
    MissingWrap,
    ProblemDims,
    Probit,
    SupportPartition,
    SupportSet,
    TabularDiscrete,
    apply_missing,
    log_likelihood,
    marginal_log_likelihood,
    sample_dataset,
)
from .info import (
    MIEstimate,
    mi_discrete_exact,
    mi_group_testing,
    mi_linear_gaussian,
    mi_missing,
    mi_monte_carlo,
    mi_probit,
    mi_worst_case,
)
from .exponent import (
    ExponentCurve,
    eo_lower_bound,
    eo_second_derivative_bound,
    eo_single_letter,
    exponent_curve,
    optimize_rho,
)
from .bounds import (
    BoundReport,
    bounds_group_testing,
    bounds_linear_regression,
    bounds_missing,
    bounds_multivariate,
    bounds_probit,
    finite_size_error_bound,
    necessity_threshold,
    partial_recovery_thresholds,
    snr_necessity_linear,
    sufficiency_threshold_fixed,
    sufficiency_threshold_scaling,
)
from .sim import SimulationReport, ml_decode, ml_decode_batch, run_trials, validate_bound
