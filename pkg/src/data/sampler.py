"""
Labeled/unlabeled minibatch sampler.

Each stream walks a fresh permutation per pass; the permutation for pass ``k``
comes from its own keyed sub-stream, so a cursor (pass, position) fully
determines the state and can be restored from a checkpoint.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import structlog

from ..errors import DataError
from ..tensor.random import RandomSource
from .datasets import SemiSupervisedSplit

logger = structlog.get_logger()

SAMPLING_MODES = ("quota", "mixed")


@dataclass
class StreamCursor:
    """Shuffled cursor over a fixed pool of example ids"""

    name: str
    pool: np.ndarray
    src: RandomSource
    pass_index: int = 0
    position: int = 0
    _order: Optional[np.ndarray] = field(default=None, repr=False)

    def __len__(self) -> int:
        return int(self.pool.size)

    def order(self) -> np.ndarray:
        if self._order is None:
            self._order = self.pool[self.src.child(self.name, self.pass_index).generator.permutation(self.pool.size)]
        return self._order

    def take(self, count: int, reuse: bool) -> Tuple[np.ndarray, Tuple[int, ...]]:
        """
        Next ``count`` ids and the offsets at which a new pass starts.

        An offset ``k`` means ids ``[:k]`` close the current pass and ``[k:]``
        belong to the next one; ``k == count`` when the pass ends exactly with
        the batch. Without reuse a batch never crosses a pass boundary: the tail
        of a pass shorter than ``count`` is skipped.
        """
        if count == 0:
            return np.empty(0, dtype=np.int64), ()
        if self.pool.size == 0:
            raise DataError(f"{self.name} stream is empty but {count} examples were requested")
        if not reuse and count > self.pool.size:
            raise DataError(
                f"{self.name} quota {count} exceeds pool of {self.pool.size} with reuse disabled"
            )
        boundaries = []
        if not reuse and self.position + count > self.pool.size:
            self._advance_pass()
            boundaries.append(0)
        taken = []
        remaining = count
        while remaining:
            order = self.order()
            chunk = order[self.position:self.position + remaining]
            taken.append(chunk)
            self.position += chunk.size
            remaining -= chunk.size
            if self.position == self.pool.size:
                self._advance_pass()
                boundaries.append(count - remaining)
        return np.concatenate(taken).astype(np.int64), tuple(boundaries)

    def _advance_pass(self) -> None:
        self.pass_index += 1
        self.position = 0
        self._order = None

    def cursor(self) -> Dict[str, int]:
        return {"pass_index": self.pass_index, "position": self.position}

    def restore(self, cursor: Dict[str, int]) -> None:
        self.pass_index = int(cursor["pass_index"])
        self.position = int(cursor["position"])
        self._order = None


@dataclass
class Batch:
    """
    One minibatch. ``labels`` is -1 on unlabeled rows; ``example_ids`` index the
    primary dataset, with extra-pool ids offset by its length.

    ``epoch_boundaries`` are row offsets where the epoch-defining stream starts
    a new pass; rows before the first offset belong to the epoch that ends.
    """

    inputs: np.ndarray
    labels: np.ndarray
    labeled_mask: np.ndarray
    example_ids: np.ndarray
    epoch_boundaries: Tuple[int, ...] = ()

    def __len__(self) -> int:
        return int(self.inputs.shape[0])

    @property
    def epoch_end(self) -> bool:
        return bool(self.epoch_boundaries)

    def epoch_segments(self) -> List[slice]:
        """Row slices split at the epoch boundaries (the last one may be empty)"""
        starts = (0,) + self.epoch_boundaries
        ends = self.epoch_boundaries + (len(self),)
        return [slice(start, end) for start, end in zip(starts, ends)]

    @property
    def labeled_count(self) -> int:
        return int(self.labeled_mask.sum())


class SamplerState:
    """Independent labeled and unlabeled streams over a SemiSupervisedSplit"""

    def __init__(self, split: SemiSupervisedSplit, src: RandomSource, mode: str = "quota", reuse: bool = True):
        if mode not in SAMPLING_MODES:
            raise DataError(f"sampling mode must be one of {SAMPLING_MODES}, got {mode!r}")
        self.split = split
        self.mode = mode
        self.reuse = reuse
        primary = len(split.dataset)
        extra_ids = np.arange(primary, primary + len(split.extra), dtype=np.int64) if split.extra is not None else np.empty(0, np.int64)
        unlabeled_pool = np.concatenate([split.unlabeled_indices.astype(np.int64), extra_ids])
        self._labeled_set = np.zeros(primary, dtype=bool)
        self._labeled_set[split.labeled_indices] = True
        self.labeled = StreamCursor("labeled", split.labeled_indices.astype(np.int64), src)
        self.unlabeled = StreamCursor("unlabeled", unlabeled_pool, src)
        self.mixed = StreamCursor("mixed", np.concatenate([split.labeled_indices.astype(np.int64), unlabeled_pool]), src)

    def streams(self) -> Dict[str, StreamCursor]:
        return {"labeled": self.labeled, "unlabeled": self.unlabeled, "mixed": self.mixed}

    def to_dict(self) -> Dict[str, Any]:
        return {name: stream.cursor() for name, stream in self.streams().items()}

    def restore(self, state: Dict[str, Any]) -> None:
        for name, stream in self.streams().items():
            if name in state:
                stream.restore(state[name])

    def examples(self, ids: np.ndarray) -> np.ndarray:
        dataset = self.split.dataset
        primary = len(dataset)
        if self.split.extra is None or ids.size == 0 or ids.max() < primary:
            return dataset.examples[ids]
        out = np.empty((ids.size,) + dataset.example_shape, dtype=dataset.examples.dtype)
        in_primary = ids < primary
        out[in_primary] = dataset.examples[ids[in_primary]]
        out[~in_primary] = self.split.extra.examples[ids[~in_primary] - primary]
        return out

    def labels_for(self, ids: np.ndarray) -> np.ndarray:
        labels = np.full(ids.size, -1, dtype=np.int64)
        dataset = self.split.dataset
        in_primary = ids < len(dataset)
        known = np.zeros(ids.size, dtype=bool)
        known[in_primary] = self._labeled_set[ids[in_primary]]
        labels[known] = dataset.labels[ids[known]]
        return labels


def sample_batch(state: SamplerState, k_labeled: int, k_unlabeled: int) -> Batch:
    """
    Draw one minibatch.

    Args:
        state: Sampler to advance
        k_labeled: Labeled quota (quota mode) or its share of the batch size (mixed mode)
        k_unlabeled: Unlabeled quota

    Returns:
        Batch with labeled rows first in quota mode, a shuffled mixture in mixed mode
    """
    if k_labeled < 0 or k_unlabeled < 0:
        raise DataError(f"quotas must be >= 0, got {k_labeled} labeled / {k_unlabeled} unlabeled")
    if k_labeled + k_unlabeled == 0:
        raise DataError("quotas are both zero")

    if state.mode == "mixed":
        ids, boundaries = state.mixed.take(k_labeled + k_unlabeled, state.reuse)
    else:
        labeled_ids, labeled_boundaries = state.labeled.take(k_labeled, state.reuse)
        unlabeled_ids, unlabeled_boundaries = state.unlabeled.take(k_unlabeled, state.reuse)
        ids = np.concatenate([labeled_ids, unlabeled_ids])
        # labeled rows come first and stay with the epoch that is ending
        if k_unlabeled > 0:
            boundaries = tuple(k_labeled + b for b in unlabeled_boundaries)
        else:
            boundaries = labeled_boundaries

    labels = state.labels_for(ids)
    return Batch(
        inputs=state.examples(ids),
        labels=labels,
        labeled_mask=labels >= 0,
        example_ids=ids,
        epoch_boundaries=boundaries,
    )
