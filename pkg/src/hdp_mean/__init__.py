"""Mean estimation of bounded data under heterogeneous differential privacy."""

__version__ = "0.1.0"

from hdp_mean._backend import BACKEND
from hdp_mean.bounds import (
    BoundReport,
    LeCamInstance,
    bound_report,
    lecam_value,
    lower_bound,
    lower_bound_from_first_principles,
    lower_bound_terms,
    tv_upper_bound,
    upper_bound,
)
from hdp_mean.estimators import (
    AnalyticMse,
    MechanismSpec,
    adpm_estimate,
    analytic_mse,
    ldpe_estimate,
    propdpm_estimate,
    sm_estimate,
    stretch_estimate,
    uni_estimate,
)
from hdp_mean.privacy import DomainError, DpCertificate, affine_release, dp_certificate, sample_laplace
from hdp_mean.sim import DistributionSpec, SimResult, estimate_mse, sample_dataset
from hdp_mean.weights import (
    InfeasibleError,
    TwoGroupProfile,
    WeightSolution,
    oracle_solve,
    project_capped_simplex,
    saturation_ratio,
    solve_general,
    solve_two_group,
)
