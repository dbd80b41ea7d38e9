"""Sparse estimation in exponential families.

L1-regularized maximum likelihood, moment/cumulant diagnostics, restricted
eigenvalue constants and synthetic experiments checking risk bounds.
"""
__version__ = "0.1.0"

from .errors import DivergenceError, DomainError, ParseError, SingularSupport, ValidationError
from .families import (
    Bernoulli,
    Dataset,
    FisherMatrix,
    FixedDesign,
    GaussianPrecision,
    LinearGLM,
    LogisticGLM,
    ParameterVector,
    TruncatedGaussianDesign,
    UnitVarGaussian,
    family_from_spec,
    fisher_information,
    fisher_risk,
    grad_nll,
    log_partition,
    mean_sufficient_stat,
    nll,
    pack_symmetric,
    population_regret,
    sample,
    unpack_symmetric,
)
from .kernels import BACKEND
from .moments import (
    AllDirections,
    ExplicitDirections,
    RestrictedCone,
    analytic_alpha,
    central_moments_along,
    cumulants_along,
    fit_alpha,
    regret_series,
    sandwich_check,
    series_window,
    verify_convexity,
    wishart_cumulant,
)
from .solver import FitResult, SolverConfig, fit_l1, fit_restricted, kkt_residual, objective, soft_threshold
from .sparsity import (
    ReConstants,
    TwoStageConfig,
    cone_membership,
    re_constants,
    support_metrics,
    threshold_support,
    two_stage_fit,
)
from .experiments import (
    ExperimentConfig,
    ExperimentRecord,
    LambdaRule,
    check_subgaussian_bound,
    make_sparse_parameter,
    measurement_error,
    prepare,
    rate_slope,
    run_trial,
    sweep,
)
from .config import parse_config
from .io import emit_report, read_dataset, write_dataset
