"""Conditional style-based generator for outfit images on posed bodies."""

import torch  # noqa: F401  loads libtorch before the extension

from ._stylecond import (
    Model,
    ValidationError,
    ModeError,
    FormatError,
    Service,
    catalog,
    decode_png,
    encode_png,
    frechet_distance,
    make_entry,
    measure_pose,
    new_checkpoint,
    pose_presets,
    random_pose_baseline,
    render_reference,
    train,
    write_dataset,
)

__all__ = [
    "Model",
    "ValidationError",
    "ModeError",
    "FormatError",
    "Service",
    "catalog",
    "decode_png",
    "encode_png",
    "frechet_distance",
    "make_entry",
    "measure_pose",
    "new_checkpoint",
    "pose_presets",
    "random_pose_baseline",
    "render_reference",
    "train",
    "write_dataset",
]
