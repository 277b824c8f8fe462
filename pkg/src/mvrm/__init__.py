"""Robust repeated-measures MANOVA, descriptive discriminant analysis,
and the covariance diagnostics they rely on."""

__version__ = "0.1.0"

from .contrasts import (
    Effect,
    HypothesisMatrix,
    centering_matrix,
    custom_hypothesis_matrix,
    hypothesis_matrix,
    kronecker,
)
from .dataset import (
    DataError,
    RepeatedMeasuresDataset,
    Schema,
    drop_variable,
    load_long,
    load_wide,
    select_time,
    write_long,
    write_wide,
)
from .diagnostics import (
    CollinearityReport,
    HomogeneityReport,
    collinearity_from_design,
    collinearity_report,
    homogeneity_report,
    pairwise_covariance_blocks,
    scree_data,
    suggest_removals,
)
from .discriminant import (
    DfcTable,
    FisherDiscriminant,
    IllConditionedError,
    dfc_table,
    discriminant_scores,
    pooled_covariance,
    raw_dfc,
    standardized_dfc,
)
from .inference import (
    BootstrapResult,
    MatsManova,
    MatsResult,
    MomentEstimates,
    bootstrap_pvalue,
    estimate_moments,
    manova_rm,
    mats,
    pseudoinverse,
)
from .simulate import (
    ScenarioConfig,
    ar1_exchangeable,
    compound_symmetry,
    generate,
    rejection_rate,
    run_experiment,
)

__all__ = [
    "__version__",
    "Effect",
    "HypothesisMatrix",
    "centering_matrix",
    "custom_hypothesis_matrix",
    "hypothesis_matrix",
    "kronecker",
    "DataError",
    "RepeatedMeasuresDataset",
    "Schema",
    "drop_variable",
    "load_long",
    "load_wide",
    "select_time",
    "write_long",
    "write_wide",
    "CollinearityReport",
    "HomogeneityReport",
    "collinearity_from_design",
    "collinearity_report",
    "homogeneity_report",
    "pairwise_covariance_blocks",
    "scree_data",
    "suggest_removals",
    "DfcTable",
    "FisherDiscriminant",
    "IllConditionedError",
    "dfc_table",
    "discriminant_scores",
    "pooled_covariance",
    "raw_dfc",
    "standardized_dfc",
    "BootstrapResult",
    "MatsManova",
    "MatsResult",
    "MomentEstimates",
    "bootstrap_pvalue",
    "estimate_moments",
    "manova_rm",
    "mats",
    "pseudoinverse",
    "ScenarioConfig",
    "ar1_exchangeable",
    "compound_symmetry",
    "generate",
    "rejection_rate",
    "run_experiment",
]
