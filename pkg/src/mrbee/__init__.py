"""Multivariable Mendelian randomization with bias-corrected estimating equations.

The package covers the full summary-statistics workflow: ingestion and
allele harmonization, error-covariance estimation from null variants, the
IVW baseline and the bias-corrected estimator with sandwich inference, an
iterative pleiotropy-outlier loop, closed-form theory predictions, and a
seeded Monte-Carlo replication harness.
"""

__version__ = "0.1.0"

from .errorcov import (
    ErrorCorrelation,
    ErrorCovariance,
    estimate_error_cov,
    project_psd,
    to_correlation,
)
from .estimators import (
    CausalEstimate,
    ScoreReport,
    fit_ivw,
    fit_mrbee,
    sandwich_cov,
    score_bee,
    score_ivw,
)
from .exceptions import EstimationError, InputError, MrbeeError
from .panel import (
    HarmonizedPanel,
    PanelSelection,
    SummaryDataset,
    harmonize,
    load_overlap_matrix,
    load_summary_table,
    partition_variants,
)
from .pleiotropy import (
    IterConfig,
    IterativeFit,
    PleiotropyReport,
    fdr_select,
    fit_mrbee_iterative,
    logm_select,
    residual_test,
)
from .simulate import (
    ReplicationMetrics,
    SimConfig,
    UhpSpec,
    gen_direct_errors,
    gen_individual,
    gen_summary,
    inject_uhp,
    run_replications,
)
from .theory import (
    AsymptoticPrediction,
    DerivedMoments,
    PopulationSpec,
    ar1_multivariable_spec,
    build_commutation_matrix,
    compute_sigma_bc,
    derive_moments,
    error_cov_theoretical,
    ivw_asymptotics,
    ivw_score_expectation,
    mrbee_asymptotics,
    overlap_full,
    overlap_none,
    overlap_univariable,
    psi_error_limits,
    psi_theta,
    special_overlap_fraction,
    univariable_spec,
    with_sizes,
)

__all__ = [
    "__version__",
    "MrbeeError",
    "InputError",
    "EstimationError",
    "SummaryDataset",
    "HarmonizedPanel",
    "PanelSelection",
    "load_summary_table",
    "load_overlap_matrix",
    "harmonize",
    "partition_variants",
    "ErrorCovariance",
    "ErrorCorrelation",
    "estimate_error_cov",
    "to_correlation",
    "project_psd",
    "CausalEstimate",
    "ScoreReport",
    "fit_ivw",
    "score_ivw",
    "fit_mrbee",
    "score_bee",
    "sandwich_cov",
    "PleiotropyReport",
    "IterativeFit",
    "IterConfig",
    "residual_test",
    "fdr_select",
    "logm_select",
    "fit_mrbee_iterative",
    "PopulationSpec",
    "DerivedMoments",
    "AsymptoticPrediction",
    "derive_moments",
    "error_cov_theoretical",
    "ivw_score_expectation",
    "special_overlap_fraction",
    "psi_error_limits",
    "psi_theta",
    "build_commutation_matrix",
    "compute_sigma_bc",
    "ivw_asymptotics",
    "mrbee_asymptotics",
    "univariable_spec",
    "ar1_multivariable_spec",
    "overlap_full",
    "overlap_none",
    "overlap_univariable",
    "with_sizes",
    "SimConfig",
    "UhpSpec",
    "ReplicationMetrics",
    "gen_individual",
    "gen_summary",
    "gen_direct_errors",
    "inject_uhp",
    "run_replications",
]
