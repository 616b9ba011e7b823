"""petquant: quantify 3D PET lesion segmentations and score cohort agreement."""

__version__ = "0.1.0"

from .agreement import (
    AgreementConfig,
    AgreementReport,
    PairedSeries,
    bland_altman,
    ccc,
    ccc_band,
    coverage_probability,
    evaluate_series,
    tdi,
    tost,
)
from .components import Lesion, connected_components, lesions_to_mask
from .detection import (
    CohortSummary,
    DetectionOutcome,
    cohort_summary,
    dice_coefficient,
    f1_score,
    match_lesions,
)
from .io import FileFormat, VolumeIOError, load_mask, load_volume, save_mask, save_volume
from .losses import (
    LossConfig,
    NormHistogram,
    ProbabilityField,
    all_losses,
    cross_entropy_loss,
    dce_loss,
    dfl_loss,
    dice_loss,
    focal_loss,
    l1_norms,
    l1dfl_loss,
    norm_histogram,
    squared_dice_loss,
)
from .metrics import (
    LesionMetrics,
    PatientMetrics,
    dmax,
    lesion_count,
    lesion_metrics,
    patient_metrics,
    suv_max,
    suv_mean,
    tla,
    tmtv,
)
from .phantom import (
    PerturbationSpec,
    PhantomSpec,
    SphereSpec,
    generate_phantom,
    perturb_mask,
    random_phantom_spec,
)
from .preprocess import ResampleMode, ct_preprocess, majority_vote, resample
from .volume import (
    Connectivity,
    LabelMask,
    ScalarVolume,
    VolumeKind,
    VoxelSpacing,
    body_weight_suv,
)

__all__ = [name for name in dir() if not name.startswith("_")]
