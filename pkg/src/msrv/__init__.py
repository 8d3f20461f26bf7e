"""Multi-scale realized variance: estimators, weights, inference and simulation."""

from .errors import (
    ConfigError,
    ContractError,
    DomainError,
    InputError,
    MSRVError,
    MSRVWarning,
    NumericError,
    ParameterError,
    SingularityError,
)
from .estimators import TickSeries, WeightScheme, avg_lag_rv, lag_rvs, msrv, rv, tsrv
from .grid import SamplingGrid, aqvt_derivative, empirical_aqvt, time_change
from .inference import (
    EstimateReport,
    NoiseMoments,
    VarianceReport,
    choose_m,
    confidence_interval,
    estimate,
    estimate_noise_moments,
    eta_sq,
    hstar_variance,
    total_asymptotic_variance,
)
from .weights import (
    H_STAR,
    HSpec,
    approxweight_scheme,
    check_h_conditions,
    gamma_sq,
    h_family_weights,
    optimal_discrete_weights,
)

__version__ = "0.1.0"
