"""Latent-factor distributed-lag modeling of multivariate ordinal wellness
panels: preprocessing, Metropolis-within-Gibbs posterior sampling, and
posterior summaries, with synthetic-data generators for validation."""

from ._version import __version__
from .errors import (ArchiveFormatError, CsvFormatError, DegenerateInputError,
                     InvariantViolationError, OrdlagError, ValidationFailedError)
from .panel import (ChainState, CovariatePanel, ModelSpec, OrdinalPanel,
                    PosteriorDraws, RawPanel, ValidationReport, validate_panel)
from .preprocess import (LagDesign, RecodingMap, RecoveryLoading,
                         build_lag_design, build_recoded_panel, compute_recovery,
                         compute_workload, kmeans_1d, recode_ordinal)
from .sampler import fit_model, run_chain
from .summaries import (ImportanceSummary, lag_effect_summary, matchday_profile,
                        metric_factor_correlation, relative_importance,
                        summarize_importance, write_summary_csvs)
from .synth import (DPClustering, TruthConfig, TruthRecord, generate_panel,
                    kmeans_dp_oracle, oracle_marginal_likelihood)

__all__ = [
    "__version__",
    "ArchiveFormatError", "CsvFormatError", "DegenerateInputError",
    "InvariantViolationError", "OrdlagError", "ValidationFailedError",
    "ChainState", "CovariatePanel", "ModelSpec", "OrdinalPanel",
    "PosteriorDraws", "RawPanel", "ValidationReport", "validate_panel",
    "LagDesign", "RecodingMap", "RecoveryLoading", "build_lag_design",
    "build_recoded_panel", "compute_recovery", "compute_workload",
    "kmeans_1d", "recode_ordinal",
    "fit_model", "run_chain",
    "ImportanceSummary", "lag_effect_summary", "matchday_profile",
    "metric_factor_correlation", "relative_importance", "summarize_importance",
    "write_summary_csvs",
    "DPClustering", "TruthConfig", "TruthRecord", "generate_panel",
    "kmeans_dp_oracle", "oracle_marginal_likelihood",
]
