"""
Training-set statistics transforms: per-channel standardization and ZCA whitening.

Each transform returns a ``TransformRecord`` that reapplies the exact same
arithmetic to held-out data.
"""

from dataclasses import dataclass, replace
from typing import Dict, Tuple

import numpy as np
import structlog

from ..errors import DataError
from .datasets import Dataset

logger = structlog.get_logger()

ZCA_EPSILON = 1e-5
MIN_STD = 1e-12


@dataclass(frozen=True)
class TransformRecord:
    kind: str
    mean: np.ndarray
    scale: np.ndarray

    def apply_array(self, examples: np.ndarray) -> np.ndarray:
        if self.kind == "standardize":
            if examples.shape[-1] != self.mean.shape[0]:
                raise DataError(f"standardize: expected {self.mean.shape[0]} channels, got {examples.shape[-1]}")
            return (examples - self.mean) / self.scale
        if self.kind == "zca":
            flat = examples.reshape(examples.shape[0], -1)
            if flat.shape[1] != self.mean.shape[0]:
                raise DataError(f"zca: expected {self.mean.shape[0]} features, got {flat.shape[1]}")
            return ((flat - self.mean) @ self.scale).reshape(examples.shape)
        raise DataError(f"Unknown transform kind {self.kind!r}")

    def apply(self, ds: Dataset) -> Dataset:
        return replace(ds, examples=self.apply_array(ds.examples))

    def to_arrays(self) -> Dict[str, np.ndarray]:
        return {"kind": np.array(self.kind), "mean": self.mean, "scale": self.scale}


def standardize(ds: Dataset) -> Tuple[Dataset, TransformRecord]:
    """
    Zero mean and unit variance per channel (last axis) from training statistics.

    Returns:
        Standardized dataset and the record to apply to held-out data
    """
    axes = tuple(range(ds.examples.ndim - 1))
    mean = ds.examples.mean(axis=axes)
    std = ds.examples.std(axis=axes)
    constant = np.flatnonzero(std < MIN_STD)
    if constant.size:
        raise DataError(f"standardize: zero variance in channel(s) {constant.tolist()} of {ds.name}")
    record = TransformRecord(kind="standardize", mean=mean, scale=std)
    return record.apply(ds), record


def zca_whiten(ds: Dataset, epsilon: float = ZCA_EPSILON) -> Tuple[Dataset, TransformRecord]:
    """
    ZCA whitening, ``T = U diag(1 / sqrt(lambda + epsilon)) U^T`` from the
    symmetric eigendecomposition of the training covariance.

    Args:
        ds: Training data
        epsilon: Regularizer added to every eigenvalue (must be positive)

    Returns:
        Whitened dataset and the record to apply to held-out data
    """
    if epsilon <= 0:
        raise DataError(f"zca_whiten: epsilon must be > 0, got {epsilon}")
    flat = ds.examples.reshape(len(ds), -1)
    n, dim = flat.shape
    if n < dim:
        logger.warning("ZCA with fewer examples than features", examples=n, features=dim)
    mean = flat.mean(axis=0)
    centered = flat - mean
    covariance = centered.T @ centered / n
    eigenvalues, eigenvectors = np.linalg.eigh(covariance)
    eigenvalues = np.clip(eigenvalues, 0.0, None)
    transform = (eigenvectors / np.sqrt(eigenvalues + epsilon)) @ eigenvectors.T
    transform = 0.5 * (transform + transform.T)
    record = TransformRecord(kind="zca", mean=mean, scale=transform)
    return record.apply(ds), record
