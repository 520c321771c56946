"""uws: universal weight-subspace extraction for model ensembles.

Extracts shared low-rank subspaces from stacks of per-layer weight
matrices via truncated zero-centered higher-order SVD, projects models
into the subspace, reconstructs and merges them there, fits new tasks by
learning coefficients only, and ships a small lab for checking the
two-level convergence behaviour of empirical second-moment operators.
"""

from .errors import (
    BadMagicError,
    ContainerError,
    CorruptPayloadError,
    DegenerateSpectrumError,
    InternalConsistencyError,
    InvalidArgumentError,
    ManifestError,
    NumericalFailureError,
    PayloadMismatchError,
    RankDeficiencyError,
    TruncatedFileError,
    UnknownDtypeError,
    UwsError,
)
from .tensor import DenseTensor, fold, frobenius_norm, mode_product, unfold
from .spectral import (
    DEFAULT_POLICY,
    RankPolicy,
    explained_variance,
    operator_norm,
    select_rank,
    thin_svd,
)
from .hosvd import (
    SliceCoefficients,
    SubspaceModel,
    hosvd_truncated,
    project_slice,
    reconstruct,
    reconstruct_slice,
    secondary_subspace,
)
from .ensemble import (
    CoefficientSet,
    ExtractionConfig,
    MEMORY_PRESETS,
    ModelWeights,
    ScreeReport,
    UniversalSubspace,
    adapt_coefficients,
    coefficient_parameter_count,
    extract_universal,
    load_coefficients,
    load_subspace,
    load_weights,
    memory_savings,
    merge_models,
    project_model,
    reconstruct_model,
    save_coefficients,
    save_subspace,
    save_weights,
    scree_report,
    stack_layer,
)
from .theory import (
    BoundParameters,
    ConvergenceReport,
    SyntheticEnsembleConfig,
    convergence_study,
    davis_kahan_check,
    sample_ensemble,
    subspace_distance,
    theorem1_bounds,
    top_k_projector,
    within_task_term,
)

__version__ = "0.1.0"

__all__ = [
    "DenseTensor",
    "unfold",
    "fold",
    "mode_product",
    "frobenius_norm",
    "thin_svd",
    "explained_variance",
    "select_rank",
    "operator_norm",
    "RankPolicy",
    "DEFAULT_POLICY",
    "SubspaceModel",
    "SliceCoefficients",
    "hosvd_truncated",
    "reconstruct",
    "project_slice",
    "reconstruct_slice",
    "secondary_subspace",
    "ModelWeights",
    "ExtractionConfig",
    "UniversalSubspace",
    "ScreeReport",
    "CoefficientSet",
    "extract_universal",
    "scree_report",
    "stack_layer",
    "project_model",
    "reconstruct_model",
    "merge_models",
    "adapt_coefficients",
    "memory_savings",
    "coefficient_parameter_count",
    "MEMORY_PRESETS",
    "save_weights",
    "load_weights",
    "save_subspace",
    "load_subspace",
    "save_coefficients",
    "load_coefficients",
    "BoundParameters",
    "theorem1_bounds",
    "within_task_term",
    "davis_kahan_check",
    "top_k_projector",
    "subspace_distance",
    "SyntheticEnsembleConfig",
    "sample_ensemble",
    "convergence_study",
    "ConvergenceReport",
    "UwsError",
    "InvalidArgumentError",
    "InternalConsistencyError",
    "NumericalFailureError",
    "DegenerateSpectrumError",
    "RankDeficiencyError",
    "ContainerError",
    "BadMagicError",
    "TruncatedFileError",
    "ManifestError",
    "UnknownDtypeError",
    "PayloadMismatchError",
    "CorruptPayloadError",
    "__version__",
]
