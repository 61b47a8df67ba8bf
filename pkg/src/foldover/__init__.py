"""Foldover screening designs and their two-stage analysis."""

from .analysis import (
    BIC,
    MBIC,
    AnalysisResult,
    FitReport,
    ModelCandidate,
    augmented_analysis,
    best_candidate,
    candidate_terms,
    first_stage,
    parse_criterion,
    preselect_sigma2,
    second_stage,
    select_best,
)
from .criteria import EciReport, bayes_a, c_constant, design_variances, eci_foldover, eci_general, prior_precision
from .design import (
    QUADRATIC,
    TWO_LEVEL,
    AugmentedDesign,
    FactorSpec,
    FoldoverDesign,
    HalfDesign,
    ModelSpec,
    alias_matrix,
    foldover,
    full_model_matrix,
    make_factors,
    model_matrix,
)
from .dof import DofSummary, exact_dof, fake_factor_basis, partition_groups, replicate_df, residual_df, group_dof
from .estimators import BayesianAAugmenter, FoldoverDesignSearch, TwoStageRegressor, check_design
from .exceptions import (
    ConfigurationError,
    DesignError,
    DimensionError,
    DofMismatchError,
    DomainError,
    SingularMatrixError,
)
from .hadamard import hadamard, supported_orders
from .io import read_data, read_design, write_design
from .numkernel import log_gamma, qr_rank, sym_inverse, t_quantile
from .search import (
    AugmentConfig,
    SearchConfig,
    augment,
    construct_direct,
    coordinate_exchange,
)
from .sim import SimResult, SimScenario, generate_truth, run_simulation

__version__ = "0.1.0"
