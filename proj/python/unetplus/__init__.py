"""Small U-Net style segmentation toolkit (C++ core)."""

from ._core import (
    CheckpointError,
    ConfigError,
    Error,
    FormatError,
    IoError,
    LabelError,
    ShapeError,
    augment,
    bce,
    checkerboard_energy,
    combined_loss,
    default_config,
    dice,
    evaluate,
    gen_synthetic,
    grad_check,
    iou,
    multiclass_report,
    nn_upsample,
    parameter_count,
    read_checkpoint,
    soft_jaccard,
    train,
)

__all__ = [
    "CheckpointError",
    "ConfigError",
    "Error",
    "FormatError",
    "IoError",
    "LabelError",
    "ShapeError",
    "augment",
    "bce",
    "checkerboard_energy",
    "combined_loss",
    "default_config",
    "dice",
    "evaluate",
    "gen_synthetic",
    "grad_check",
    "iou",
    "multiclass_report",
    "nn_upsample",
    "parameter_count",
    "read_checkpoint",
    "soft_jaccard",
    "train",
]
