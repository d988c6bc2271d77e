"""Pedestrian detection with boosted trees over aggregated channel features."""

from ._nnfdet import (
    FEATURE_KINDS,
    Error,
    Model,
    compute_channels,
    evaluate,
    gen_scene,
    iou,
    nms,
    preset_names,
    train,
)

__all__ = [
    "FEATURE_KINDS",
    "Error",
    "Model",
    "compute_channels",
    "evaluate",
    "gen_scene",
    "iou",
    "nms",
    "preset_names",
    "train",
]
