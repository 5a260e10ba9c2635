"""Reliability and validity analysis for benchmark score matrices.

Treats an automated evaluation metric as a test: the benchmark items
are the test's questions, the candidate systems are the examinees, and
the classical toolkit applies — reliability coefficients, criterion
validity with attenuation analysis, multitrait-multimethod tables, and
factor models over the item correlation structure — backed by
simulation oracles with analytically known ground truth.
"""

__version__ = "0.1.0"

from .exceptions import (
    ComputationError,
    ConstantInputError,
    DataError,
    RelvalError,
)
from .ingest import (
    ScoreMatrix,
    ScoreRecord,
    parse_records,
    pivot,
    records_to_csv_bytes,
    split_matrix,
)
from .stats import (
    BootstrapCI,
    CorrelationResult,
    bootstrap,
    correlation_matrix,
    fisher_z_interval,
    pearson,
    substream,
    variance,
)
from .reliability import (
    ReliabilityEstimate,
    SplitHalfResult,
    cronbach_alpha,
    sem,
    spearman_brown,
    split_half,
    test_retest,
)
from .validity import (
    CriterionValidityReport,
    MtmmSummary,
    MtmmTable,
    build_mtmm,
    campbell_fiske,
    criterion_validity,
    disattenuate,
)
from .factor import (
    CfaFit,
    ConfirmatoryFactorAnalysis,
    ExploratoryFactorAnalysis,
    FactorModel,
    FactorScores,
    cfa_fit,
    efa,
    factor_scores,
    ml_discrepancy,
    ml_gradient,
    smc,
    standardize,
    suggest_n_factors,
    varimax,
)
from .simulate import (
    CttSpec,
    FactorSimSpec,
    SimulatedDataset,
    ctt_spec_for_reliability,
    generate_criterion,
    generate_ctt,
    generate_factor,
    generate_retest,
)
from .report import (
    AnalysisReport,
    build_report,
    plot_data,
    render,
)

__all__ = [
    "AnalysisReport",
    "BootstrapCI",
    "CfaFit",
    "ComputationError",
    "ConfirmatoryFactorAnalysis",
    "ConstantInputError",
    "CorrelationResult",
    "CriterionValidityReport",
    "CttSpec",
    "DataError",
    "ExploratoryFactorAnalysis",
    "FactorModel",
    "FactorScores",
    "FactorSimSpec",
    "MtmmSummary",
    "MtmmTable",
    "RelvalError",
    "ReliabilityEstimate",
    "ScoreMatrix",
    "ScoreRecord",
    "SimulatedDataset",
    "SplitHalfResult",
    "bootstrap",
    "build_mtmm",
    "build_report",
    "campbell_fiske",
    "cfa_fit",
    "correlation_matrix",
    "criterion_validity",
    "cronbach_alpha",
    "ctt_spec_for_reliability",
    "disattenuate",
    "efa",
    "factor_scores",
    "fisher_z_interval",
    "generate_criterion",
    "generate_ctt",
    "generate_factor",
    "generate_retest",
    "ml_discrepancy",
    "ml_gradient",
    "parse_records",
    "pearson",
    "pivot",
    "plot_data",
    "records_to_csv_bytes",
    "render",
    "sem",
    "smc",
    "spearman_brown",
    "split_half",
    "split_matrix",
    "standardize",
    "substream",
    "suggest_n_factors",
    "test_retest",
    "variance",
    "varimax",
]
