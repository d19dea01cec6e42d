"""Weakly-supervised surface crack segmentation.

Fuses a coarse localisation map (patch-classifier scores averaged with a
class-activation map) with patch-local multi-Otsu thresholding to produce
per-pixel crack confidence maps from classification-only supervision.
"""

from .backend import (
    FileScoreBackend,
    PatchScoreGrid,
    TorchScriptBackend,
    load_cam,
    load_psg,
    save_psg,
    score_patches,
)
from .errors import (
    BackendError,
    ConfigError,
    DataError,
    DatasetError,
    FormatError,
    PaddingError,
    ShapeError,
    UsageError,
    WeaksegError,
)
from .evaluation import (
    DATASETS,
    ConfusionCounts,
    DatasetSpec,
    classification_f1,
    confusion_at,
    extract_patch_labels,
    macro_f1,
    make_splits,
)
from .filters import BilateralParams, StructuringElement, bilateral_filter, close, dilate, erode
from .pipeline import (
    PipelineConfig,
    fuse,
    gold_standard_localisation,
    gold_standard_segment,
    localisation_from_scores,
    localise,
    merge_localisation,
    segment,
    segment_with_localisation,
)
from .raster import (
    PatchGrid,
    lanczos_resize,
    load_image,
    load_mask,
    load_scoremap,
    make_patch_grid,
    mirror_pad,
    save_scoremap,
    to_grayscale,
)
from .thresholding import (
    OtsuResult3,
    histogram256,
    niblack,
    otsu2,
    otsu3,
    patch_threshold_segment,
    quantize,
    sauvola,
)

__version__ = "0.1.0"
