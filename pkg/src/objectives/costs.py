"""
Cost functions on probability and logit tensors.

Asymmetric consistency costs take ``(target, prediction)``: the divergence is
measured from the target distribution.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import structlog

from ..errors import ConfigError, DataError, NonFiniteError, ShapeError
from ..tensor import ops
from ..tensor.tensor import Tensor

logger = structlog.get_logger()

PROBABILITY_FLOOR = 1e-12
CONSISTENCY_KINDS = ("mse", "kl", "c_tau")


@dataclass(frozen=True)
class ConsistencyConfig:
    kind: str = "mse"
    max_weight: float = 100.0
    rampup_steps: int = 0
    tau: float = 1.0

    def __post_init__(self):
        violations = []
        if self.kind not in CONSISTENCY_KINDS:
            violations.append(f"consistency kind must be one of {CONSISTENCY_KINDS}, got {self.kind!r}")
        if self.kind == "c_tau" and not 0.0 < self.tau <= 1.0:
            violations.append(f"tau must lie in (0, 1], got {self.tau}")
        if self.max_weight < 0:
            violations.append(f"max_weight must be >= 0, got {self.max_weight}")
        if self.rampup_steps < 0:
            violations.append(f"rampup_steps must be >= 0, got {self.rampup_steps}")
        if violations:
            raise ConfigError(violations)


@dataclass(frozen=True)
class CostBreakdown:
    classification: float
    class_weight: float
    consistency_raw: float
    consistency_weight: float
    coupling: float = 0.0
    coupling_weight: float = 0.0

    @property
    def total(self) -> float:
        return (
            self.classification * self.class_weight
            + self.consistency_raw * self.consistency_weight
            + self.coupling * self.coupling_weight
        )

    @property
    def consistency(self) -> float:
        return self.consistency_raw * self.consistency_weight


def _check_pair(name: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{name}: shapes differ, {a.shape} vs {b.shape}")
    if a.ndim != 2:
        raise ShapeError(f"{name}: expected (batch, classes) tensors, got {a.shape}")


def _row_reduce(per_row: Tensor, row_mask: Optional[np.ndarray]) -> Tensor:
    """Batch mean; masked rows contribute zero but still count in the denominator"""
    if row_mask is None:
        return ops.reduce_mean(per_row)
    weights = np.asarray(row_mask, dtype=per_row.dtype)
    if weights.shape != per_row.shape:
        raise ShapeError(f"row mask shape {weights.shape} does not match batch {per_row.shape}")
    return ops.reduce_sum(per_row * Tensor.wrap(weights)) / float(per_row.shape[0])


def classification_cost(
    probabilities: Tensor,
    labels: np.ndarray,
    labeled_mask: np.ndarray,
    expected_labeled: float,
    require_labels: bool = False,
) -> Tuple[Tensor, float]:
    """
    Mean cross-entropy over the labeled rows.

    Args:
        probabilities: Softmax outputs, shape (batch, classes)
        labels: Integer labels (ignored on unlabeled rows)
        labeled_mask: Boolean mask of labeled rows
        expected_labeled: Expected labeled count per minibatch; becomes the class weight
        require_labels: Raise when the mask is empty (quota sampling guarantees labels)

    Returns:
        (cost, class_weight)
    """
    if probabilities.ndim != 2:
        raise ShapeError(f"classification_cost: expected (batch, classes), got {probabilities.shape}")
    mask = np.asarray(labeled_mask, dtype=bool)
    count = int(mask.sum())
    if count == 0:
        if require_labels and expected_labeled > 0:
            raise DataError("classification_cost: batch has no labeled rows but the quota guarantees some")
        return Tensor(0.0, dtype=probabilities.dtype), float(expected_labeled)
    n_classes = probabilities.shape[1]
    rows = np.flatnonzero(mask)
    row_labels = np.asarray(labels)[rows]
    if np.any(row_labels < 0) or np.any(row_labels >= n_classes):
        raise ShapeError(f"classification_cost: label outside [0, {n_classes})")
    targets = np.zeros(probabilities.shape, dtype=probabilities.dtype)
    targets[rows, row_labels] = 1.0
    log_p = ops.log(ops.clip_min(probabilities, PROBABILITY_FLOOR))
    cost = -ops.reduce_sum(log_p * Tensor.wrap(targets)) / float(count)
    return cost, float(expected_labeled)


def consistency_mse(p: Tensor, q: Tensor, row_mask: Optional[np.ndarray] = None) -> Tensor:
    """Batch mean of (1/N) sum_i (p_i - q_i)^2"""
    _check_pair("consistency_mse", p, q)
    per_row = ops.reduce_mean(ops.square(p - q), axis=1)
    return _row_reduce(per_row, row_mask)


def _kl_rows(target: Tensor, prediction: Tensor) -> Tensor:
    log_target = ops.log(ops.clip_min(target, PROBABILITY_FLOOR))
    log_prediction = ops.log(ops.clip_min(prediction, PROBABILITY_FLOOR))
    return ops.reduce_sum(target * (log_target - log_prediction), axis=1)


def consistency_kl(target: Tensor, prediction: Tensor, row_mask: Optional[np.ndarray] = None) -> Tensor:
    """Batch mean of KL(target || prediction)"""
    _check_pair("consistency_kl", target, prediction)
    return _row_reduce(_kl_rows(target, prediction), row_mask)


def consistency_c_tau(p: Tensor, q: Tensor, tau: float, row_mask: Optional[np.ndarray] = None) -> Tensor:
    """
    Scaled divergence between softened distributions.

    ``Z * KL(tau p + (1 - tau)/N || tau q + (1 - tau)/N)`` with ``Z = 2 / (N tau)^2``.
    Approaches ``consistency_mse`` as tau goes to 0 and equals ``(2/N^2) KL(p||q)``
    at tau = 1.
    """
    if tau <= 0:
        raise ConfigError([f"consistency_c_tau: tau must be > 0, got {tau}; use consistency_mse for the limit"])
    if tau > 1:
        raise ConfigError([f"consistency_c_tau: tau must be <= 1, got {tau}"])
    _check_pair("consistency_c_tau", p, q)
    n_classes = p.shape[1]
    floor = (1.0 - tau) / n_classes
    p_tau = p * tau + floor
    q_tau = q * tau + floor
    scale = 2.0 / (n_classes * n_classes * tau * tau)
    return _row_reduce(_kl_rows(p_tau, q_tau), row_mask) * scale


def consistency_cost(
    cfg: ConsistencyConfig,
    prediction: Tensor,
    target: Tensor,
    row_mask: Optional[np.ndarray] = None,
) -> Tensor:
    """Dispatch on ``cfg.kind``; the target is the first argument of the asymmetric costs"""
    if cfg.kind == "mse":
        return consistency_mse(prediction, target, row_mask)
    if cfg.kind == "kl":
        return consistency_kl(target, prediction, row_mask)
    return consistency_c_tau(target, prediction, cfg.tau, row_mask)


def coupling_cost(logits_a: Tensor, logits_b: Tensor) -> Tensor:
    """Mean squared difference of raw logits"""
    if logits_a.shape != logits_b.shape:
        raise ShapeError(f"coupling_cost: shapes differ, {logits_a.shape} vs {logits_b.shape}")
    return ops.reduce_mean(ops.square(logits_a - logits_b))


def check_finite(name: str, value: Tensor) -> None:
    if not np.all(np.isfinite(value.data)):
        logger.error("Non-finite cost", cost=name)
        raise NonFiniteError(f"{name} is not finite")
