"""
Per-example prediction ensemble for temporal ensembling.

Predictions recorded during an epoch are held as pending and folded into the
ensemble once, when the epoch ends, so every stored vector changes at most
once per epoch.
"""

from typing import Dict, Optional, Tuple

import numpy as np
import structlog

from ..errors import DataError

logger = structlog.get_logger()


class TemporalEnsembleStore:
    def __init__(self, n_examples: int, n_classes: int, decay: float = 0.6, dtype: np.dtype = np.float64):
        if not 0.0 <= decay < 1.0:
            raise DataError(f"temporal ensemble decay must lie in [0, 1), got {decay}")
        self.decay = decay
        self.ensemble = np.zeros((n_examples, n_classes), dtype=dtype)
        self.counts = np.zeros(n_examples, dtype=np.int64)
        self._pending: Dict[int, np.ndarray] = {}
        self.epochs = 0

    @property
    def n_examples(self) -> int:
        return int(self.ensemble.shape[0])

    def _check_ids(self, example_ids: np.ndarray) -> np.ndarray:
        ids = np.asarray(example_ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.n_examples):
            raise DataError(f"unknown example id in {ids.min()}..{ids.max()} (store holds {self.n_examples})")
        return ids

    def record(self, example_ids: np.ndarray, predictions: np.ndarray) -> None:
        """Remember this epoch's prediction for each example (the latest one wins)"""
        ids = self._check_ids(example_ids)
        for example_id, prediction in zip(ids, np.asarray(predictions)):
            self._pending[int(example_id)] = np.array(prediction, dtype=self.ensemble.dtype)

    def commit(self) -> int:
        """Fold pending predictions into the ensemble; returns the number of examples updated"""
        for example_id, prediction in self._pending.items():
            self.ensemble[example_id] = self.decay * self.ensemble[example_id] + (1.0 - self.decay) * prediction
            self.counts[example_id] += 1
        updated = len(self._pending)
        self._pending = {}
        self.epochs += 1
        logger.debug("Temporal ensemble committed", epoch=self.epochs, updated=updated)
        return updated

    def targets(self, example_ids: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Bias-corrected targets and a mask of examples that have one"""
        ids = self._check_ids(example_ids)
        counts = self.counts[ids]
        available = counts > 0
        out = np.zeros((ids.size, self.ensemble.shape[1]), dtype=self.ensemble.dtype)
        if available.any():
            correction = 1.0 - self.decay ** counts[available].astype(np.float64)
            out[available] = self.ensemble[ids[available]] / correction[:, None]
        return out, available

    def to_arrays(self) -> Dict[str, np.ndarray]:
        pending_ids = np.array(sorted(self._pending), dtype=np.int64)
        pending = (np.stack([self._pending[i] for i in pending_ids]) if pending_ids.size
                   else np.zeros((0, self.ensemble.shape[1]), dtype=self.ensemble.dtype))
        return {
            "ensemble": self.ensemble,
            "counts": self.counts,
            "pending_ids": pending_ids,
            "pending": pending,
            "epochs": np.array(self.epochs),
        }

    @classmethod
    def from_arrays(cls, arrays: Dict[str, np.ndarray], decay: float) -> "TemporalEnsembleStore":
        ensemble = np.asarray(arrays["ensemble"])
        store = cls(ensemble.shape[0], ensemble.shape[1], decay=decay, dtype=ensemble.dtype)
        store.ensemble = ensemble.copy()
        store.counts = np.asarray(arrays["counts"]).astype(np.int64)
        store._pending = {int(i): np.array(p) for i, p in zip(arrays["pending_ids"], arrays["pending"])}
        store.epochs = int(arrays["epochs"])
        return store


def temporal_target(store: TemporalEnsembleStore, example_id: int) -> Optional[np.ndarray]:
    """
    Bias-corrected ensemble prediction ``Z / (1 - decay^count)`` for one example.

    Returns None before the first update; the consistency term is skipped then.
    """
    targets, available = store.targets(np.array([example_id]))
    return targets[0] if available[0] else None
