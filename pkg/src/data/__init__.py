"""
Datasets, normalization, augmentation and minibatch sampling
"""

from .datasets import (
    Dataset,
    SemiSupervisedSplit,
    holdout_split,
    make_glyphs,
    make_two_moons,
    remove_labels,
)
from .idx import load_idx, write_idx
from .normalize import TransformRecord, standardize, zca_whiten
from .augment import AugmentConfig, augment, augment_batch, flip_image, sample_offsets, translate
from .sampler import Batch, SamplerState, StreamCursor, sample_batch

__all__ = [
    "Dataset",
    "SemiSupervisedSplit",
    "holdout_split",
    "make_glyphs",
    "make_two_moons",
    "remove_labels",
    "load_idx",
    "write_idx",
    "TransformRecord",
    "standardize",
    "zca_whiten",
    "AugmentConfig",
    "augment",
    "augment_batch",
    "flip_image",
    "sample_offsets",
    "translate",
    "Batch",
    "SamplerState",
    "StreamCursor",
    "sample_batch",
]
