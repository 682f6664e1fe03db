"""
In-memory datasets, synthetic generators and label splits.
"""

from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np
import structlog

from ..errors import DataError
from ..tensor.random import RandomSource

logger = structlog.get_logger()


@dataclass(frozen=True)
class Dataset:
    """
    Examples with optional integer labels.

    ``examples`` is ``(n, *example_shape)``; images are height x width x channels.
    """

    examples: np.ndarray
    labels: Optional[np.ndarray]
    n_classes: int
    name: str = "dataset"

    def __post_init__(self):
        if self.examples.ndim < 2:
            raise DataError(f"{self.name}: examples must be (n, ...), got shape {self.examples.shape}")
        if self.labels is not None:
            if self.labels.shape != (len(self.examples),):
                raise DataError(
                    f"{self.name}: {len(self.labels)} labels for {len(self.examples)} examples"
                )
            if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
                raise DataError(f"{self.name}: labels must lie in [0, {self.n_classes})")

    def __len__(self) -> int:
        return int(self.examples.shape[0])

    @property
    def example_shape(self) -> Tuple[int, ...]:
        return tuple(self.examples.shape[1:])

    @property
    def is_image(self) -> bool:
        return self.examples.ndim == 4

    def subset(self, indices: np.ndarray, name: Optional[str] = None) -> "Dataset":
        labels = None if self.labels is None else self.labels[indices]
        return replace(self, examples=self.examples[indices], labels=labels, name=name or self.name)

    def without_labels(self) -> "Dataset":
        return replace(self, labels=None)

    def class_counts(self) -> np.ndarray:
        if self.labels is None:
            raise DataError(f"{self.name}: dataset has no labels")
        return np.bincount(self.labels, minlength=self.n_classes)


@dataclass(frozen=True)
class SemiSupervisedSplit:
    """Labeled and unlabeled index sets over one dataset, plus an optional extra pool"""

    dataset: Dataset
    labeled_indices: np.ndarray
    unlabeled_indices: np.ndarray
    extra: Optional[Dataset] = field(default=None)

    def __post_init__(self):
        overlap = np.intersect1d(self.labeled_indices, self.unlabeled_indices)
        if overlap.size:
            raise DataError(f"labeled and unlabeled indices overlap in {overlap.size} places")

    @property
    def labeled_count(self) -> int:
        return int(self.labeled_indices.size)

    @property
    def unlabeled_count(self) -> int:
        extra = len(self.extra) if self.extra is not None else 0
        return int(self.unlabeled_indices.size) + extra

    def with_extra(self, extra: Dataset) -> "SemiSupervisedSplit":
        if extra.example_shape != self.dataset.example_shape:
            raise DataError(
                f"extra pool shape {extra.example_shape} differs from dataset {self.dataset.example_shape}"
            )
        return replace(self, extra=extra.without_labels())


def make_two_moons(n: int, noise_sigma: float, seed: int) -> Dataset:
    """
    Two interleaved half circles.

    Class 0 lies on the unit circle around (0, 0) for angles in [0, pi];
    class 1 on the unit circle around (1, 0.5) for angles in [pi, 2 pi].

    Args:
        n: Total number of points (even, at least 2)
        noise_sigma: Gaussian jitter added to both coordinates
        seed: Random seed

    Returns:
        Dataset of shape (n, 2) with n/2 points per class
    """
    if n < 2 or n % 2:
        raise DataError(f"make_two_moons: n must be even and >= 2, got {n}")
    if noise_sigma < 0:
        raise DataError(f"make_two_moons: noise_sigma must be >= 0, got {noise_sigma}")
    half = n // 2
    t = np.linspace(0.0, np.pi, half)
    outer = np.stack([np.cos(t), np.sin(t)], axis=1)
    inner = np.stack([1.0 - np.cos(t), 0.5 - np.sin(t)], axis=1)
    points = np.concatenate([outer, inner], axis=0)
    if noise_sigma > 0:
        points = points + RandomSource(seed).child("two_moons").generator.normal(0.0, noise_sigma, size=points.shape)
    labels = np.repeat(np.arange(2, dtype=np.int64), half)
    return Dataset(examples=points, labels=labels, n_classes=2, name="two_moons")


def make_glyphs(n: int, seed: int, side: int = 8, n_classes: int = 10, channels: int = 1,
                noise_sigma: float = 0.1, shift: int = 1) -> Dataset:
    """
    Small synthetic images: one fixed random stroke pattern per class,
    jittered by a random shift and pixel noise, values clipped to [0, 1].

    Class prototypes do not depend on ``seed``, so sets drawn with different
    seeds share classes (train/test pairs).
    """
    if n < n_classes:
        raise DataError(f"make_glyphs: need at least one example per class, got n={n}")
    if side < 4:
        raise DataError(f"make_glyphs: side must be >= 4, got {side}")
    prototypes_src = RandomSource(0).child("glyph_prototypes", side * 1000 + n_classes)
    prototypes = (prototypes_src.generator.random((n_classes, side, side, channels)) < 0.35).astype(np.float64)

    generator = RandomSource(seed).child("glyphs").generator
    labels = np.arange(n, dtype=np.int64) % n_classes
    labels = labels[generator.permutation(n)]
    shifts = generator.integers(-shift, shift + 1, size=(n, 2))
    images = np.empty((n, side, side, channels))
    for index, (label, (dy, dx)) in enumerate(zip(labels, shifts)):
        images[index] = np.roll(prototypes[label], (int(dy), int(dx)), axis=(0, 1))
    images = np.clip(images + generator.normal(0.0, noise_sigma, size=images.shape), 0.0, 1.0)
    return Dataset(examples=images, labels=labels, n_classes=n_classes, name="glyphs")


def remove_labels(ds: Dataset, keep_per_class: int, src: RandomSource) -> SemiSupervisedSplit:
    """
    Keep an equal number of labels per class and mark everything else unlabeled.

    Args:
        ds: Fully labeled dataset
        keep_per_class: Labels to retain in every class
        src: Random source choosing which labels survive

    Returns:
        SemiSupervisedSplit over ``ds``
    """
    if ds.labels is None:
        raise DataError(f"remove_labels: {ds.name} has no labels")
    if keep_per_class < 0:
        raise DataError(f"remove_labels: keep_per_class must be >= 0, got {keep_per_class}")
    generator = src.child("remove_labels").generator
    kept = []
    for label in range(ds.n_classes):
        members = np.flatnonzero(ds.labels == label)
        if members.size < keep_per_class:
            raise DataError(
                f"remove_labels: class {label} has {members.size} members, fewer than {keep_per_class}"
            )
        kept.append(generator.permutation(members)[:keep_per_class])
    labeled = np.sort(np.concatenate(kept)).astype(np.int64)
    unlabeled = np.setdiff1d(np.arange(len(ds), dtype=np.int64), labeled)
    logger.debug("Labels removed", dataset=ds.name, labeled=int(labeled.size), unlabeled=int(unlabeled.size))
    return SemiSupervisedSplit(dataset=ds, labeled_indices=labeled, unlabeled_indices=unlabeled)


def holdout_split(ds: Dataset, fraction: float, src: RandomSource) -> Tuple[Dataset, Dataset]:
    """Random (train, validation) partition with ``fraction`` of the examples held out"""
    if not 0.0 < fraction < 1.0:
        raise DataError(f"holdout_split: fraction must lie in (0, 1), got {fraction}")
    held = int(round(len(ds) * fraction))
    if held == 0 or held == len(ds):
        raise DataError(f"holdout_split: fraction {fraction} of {len(ds)} leaves an empty side")
    order = src.child("holdout").generator.permutation(len(ds))
    validation = np.sort(order[:held])
    train = np.sort(order[held:])
    return ds.subset(train, name=f"{ds.name}-train"), ds.subset(validation, name=f"{ds.name}-validation")
