"""Copy-paste synthesis of object-removal training triplets.

Instances cut from segmentation data are pasted onto real backgrounds: the
composite is the model input, the paste mask marks the object, and the
untouched background is the ground truth.
"""

__version__ = "0.1.0"

from .compositing import blend, build_triplet, make_trimap, solve_alpha
from .config import PipelineConfig, load_config
from .core import (
    BackgroundRecord,
    ClassStats,
    InstanceRecord,
    Triplet,
    TrimapLabel,
    derive_sample_seed,
)
from .enhance import EnhancementSpec, MaskEnhancer, enhance_mask, pick_enhancement
from .filtering import (
    InstanceFilter,
    class_threshold,
    compute_class_stats,
    filter_backgrounds,
    filter_instances,
)
from .metrics import evaluate_directory, psnr, ssim
from .pipeline import CopyPasteSynthesizer, build_dataset, build_val_split, validate_dataset
from .placement import feasible_region, iou, pick_center, resize_instance, sample_scale

__all__ = [
    "BackgroundRecord",
    "ClassStats",
    "CopyPasteSynthesizer",
    "EnhancementSpec",
    "InstanceFilter",
    "InstanceRecord",
    "MaskEnhancer",
    "PipelineConfig",
    "Triplet",
    "TrimapLabel",
    "blend",
    "build_dataset",
    "build_triplet",
    "build_val_split",
    "class_threshold",
    "compute_class_stats",
    "derive_sample_seed",
    "enhance_mask",
    "evaluate_directory",
    "feasible_region",
    "filter_backgrounds",
    "filter_instances",
    "iou",
    "load_config",
    "make_trimap",
    "pick_center",
    "pick_enhancement",
    "psnr",
    "resize_instance",
    "sample_scale",
    "solve_alpha",
    "ssim",
    "validate_dataset",
]
