"""Maximum-entropy measurement design and recovery for low-rank matrices.

The package builds measurement masks that maximize the information carried
by linear measurements of an unknown low-rank matrix, recovers the matrix
by nuclear-norm/elastic-net minimization, and ships a reproducible
experiment harness comparing designed masks against random ones.
"""

from .constants import (
    DEFAULT_RANK_THRESHOLD,
    EXACT_TOL,
    GAMMA2_FLOOR,
    JITTER_SCALE,
    MASK_POWER_TOL,
    ORTHONORMAL_TOL,
    PSD_TOL,
)
from .frames import (
    FrameSet,
    avg_coherence,
    entropy_lower_bound,
    flip,
    frames_to_masks,
    ini_flip,
    ini_kk,
    kerdock_frames,
    kk_compatible,
    kk_frame_factors,
    random_frames,
    worst_case_coherence,
)
from .harness import (
    ExperimentConfig,
    ExperimentResult,
    RecoveryTrace,
    SummaryRow,
    default_init_method,
    estimate_signal_variance,
    normalized_error,
    patch_image,
    run_experiment,
    run_maxent,
    run_pca_oracle,
    run_random_baseline,
    summarize_traces,
    unpatch_image,
)
from .recovery import (
    RecoveryOptions,
    RecoveryResult,
    estimate_subspaces,
    map_objective,
    recover,
)
from .sequential import (
    SubspaceEstimate,
    next_mask,
    pca_masks,
    seq_objective,
)
from .smg import (
    IllConditionedSystemError,
    Mask,
    MeasurementRecord,
    SMGModel,
    check_mask,
    conditional_moments,
    exp_entropy,
    measure,
    measurement_cov_matrix,
    project_mask,
    random_model,
    random_orthonormal,
    sample_smg,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_RANK_THRESHOLD",
    "EXACT_TOL",
    "GAMMA2_FLOOR",
    "JITTER_SCALE",
    "MASK_POWER_TOL",
    "ORTHONORMAL_TOL",
    "PSD_TOL",
    "FrameSet",
    "avg_coherence",
    "entropy_lower_bound",
    "flip",
    "frames_to_masks",
    "ini_flip",
    "ini_kk",
    "kerdock_frames",
    "kk_compatible",
    "kk_frame_factors",
    "random_frames",
    "worst_case_coherence",
    "ExperimentConfig",
    "ExperimentResult",
    "RecoveryTrace",
    "SummaryRow",
    "default_init_method",
    "estimate_signal_variance",
    "normalized_error",
    "patch_image",
    "run_experiment",
    "run_maxent",
    "run_pca_oracle",
    "run_random_baseline",
    "summarize_traces",
    "unpatch_image",
    "RecoveryOptions",
    "RecoveryResult",
    "estimate_subspaces",
    "map_objective",
    "recover",
    "SubspaceEstimate",
    "next_mask",
    "pca_masks",
    "seq_objective",
    "IllConditionedSystemError",
    "Mask",
    "MeasurementRecord",
    "SMGModel",
    "check_mask",
    "conditional_moments",
    "exp_entropy",
    "measure",
    "measurement_cov_matrix",
    "project_mask",
    "random_model",
    "random_orthonormal",
    "sample_smg",
    "__version__",
]
