"""wbaug: emulate and correct in-camera white-balance errors on sRGB images.

The engine fits per-exemplar polynomial color transforms between correctly
white-balanced images and their renditions under other color temperatures
and photo-finishing styles, indexes exemplars by a compact color-distribution
feature, and re-renders new images by blending the transforms of their
nearest training neighbors.
"""

__version__ = "0.1.0"

from .color import ImageBuffer, clamp_gamut, kernel_phi, srgb_decode, srgb_encode
from .errors import (
    CorruptModelError,
    DegenerateInputError,
    GrayscaleImageError,
    InvalidInputError,
    InvalidStateError,
    ModelFormatError,
    UnsupportedVersionError,
    WbaugError,
)
from .features import HistogramParams, PcaModel, compute_histogram, fit_pca, project
from .mapping import (
    CANONICAL_SETTINGS,
    ColorTransform,
    Style,
    WbSetting,
    apply_transform,
    fit_transform,
)
from .pipeline import (
    AugmentationRequest,
    RunManifest,
    augment,
    correct,
    detect_grayscale,
    run_batch,
)
from .retrieval import FeatureIndex, NeighborSet, blend_transforms, knn_query, rbf_weights
from .store import (
    Direction,
    TrainingRecord,
    WbModel,
    build_model,
    load_model,
    model_info,
    read_manifest,
    save_model,
)

__all__ = [
    "__version__",
    "ImageBuffer",
    "clamp_gamut",
    "kernel_phi",
    "srgb_decode",
    "srgb_encode",
    "WbaugError",
    "InvalidInputError",
    "DegenerateInputError",
    "GrayscaleImageError",
    "InvalidStateError",
    "ModelFormatError",
    "CorruptModelError",
    "UnsupportedVersionError",
    "HistogramParams",
    "PcaModel",
    "compute_histogram",
    "fit_pca",
    "project",
    "CANONICAL_SETTINGS",
    "ColorTransform",
    "Style",
    "WbSetting",
    "apply_transform",
    "fit_transform",
    "AugmentationRequest",
    "RunManifest",
    "augment",
    "correct",
    "detect_grayscale",
    "run_batch",
    "FeatureIndex",
    "NeighborSet",
    "blend_transforms",
    "knn_query",
    "rbf_weights",
    "Direction",
    "TrainingRecord",
    "WbModel",
    "build_model",
    "load_model",
    "model_info",
    "read_manifest",
    "save_model",
]
