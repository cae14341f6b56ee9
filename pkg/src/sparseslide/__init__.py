"""Sparse sequential patch sampling and early-classification evaluation.

The library works on gridded slide images: a slide is tiled into fixed
patches at a chosen magnification, a scorer assigns each patch a value
in [0, 1], and inference visits patches in random order while keeping a
small fixed-capacity list of the best candidates seen so far. The
metrics module quantifies how quickly that process finds positive
tissue and how slide-level rankings converge as the patch budget grows.
"""

from .engine import (
    CandidateList,
    InferenceTrace,
    run_sequential,
    sample_permutation,
    slide_score,
)
from .imaging import GrayImage, BinaryMask, IntegralImage, Rect
from .metrics import (
    CostCurve,
    SlideEvalStats,
    average_precision,
    cost_curve,
    failure_rate,
    nhg_moments,
    roc_auc,
    threshold_range,
    ttd_monte_carlo,
)
from .rng import Rng, derive_seed
from .tiling import (
    MAGNIFICATIONS,
    MODE_INFERENCE,
    MODE_TRAINING,
    PATCH_SIZE,
    Patch,
    SlideGrid,
    patch_span_ref,
    tile_slide,
    tissue_mask,
)

__version__ = "0.1.0"

__all__ = [
    "BinaryMask",
    "CandidateList",
    "CostCurve",
    "GrayImage",
    "InferenceTrace",
    "IntegralImage",
    "MAGNIFICATIONS",
    "MODE_INFERENCE",
    "MODE_TRAINING",
    "PATCH_SIZE",
    "Patch",
    "Rect",
    "Rng",
    "SlideEvalStats",
    "SlideGrid",
    "average_precision",
    "cost_curve",
    "derive_seed",
    "failure_rate",
    "nhg_moments",
    "patch_span_ref",
    "roc_auc",
    "run_sequential",
    "sample_permutation",
    "slide_score",
    "threshold_range",
    "tile_slide",
    "tissue_mask",
    "ttd_monte_carlo",
    "__version__",
]
