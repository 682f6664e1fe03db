from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable

import numpy as np

from ..errors import ShapeError
from .spec import ModelSpec


@dataclass
class WeightSet:
    """
    Named parameters and running means of one model instance.

    ``params`` holds trainable tensors (``<layer>.v``, ``<layer>.g``,
    ``<layer>.b`` or ``<layer>.w``); ``buffers`` holds the running means used
    by mean-only batch norm in evaluation mode. ``fingerprint`` identifies the
    ModelSpec the set was built for.
    """

    params: Dict[str, np.ndarray]
    buffers: Dict[str, np.ndarray]
    fingerprint: str
    meta: Dict[str, str] = field(default_factory=dict)

    @classmethod
    def zeros(cls, spec: ModelSpec, dtype: np.dtype = np.float64) -> "WeightSet":
        return cls(
            params={name: np.zeros(shape, dtype=dtype) for name, shape in spec.parameter_shapes().items()},
            buffers={name: np.zeros(shape, dtype=dtype) for name, shape in spec.buffer_shapes().items()},
            fingerprint=spec.fingerprint(),
        )

    @property
    def dtype(self) -> np.dtype:
        first = next(iter(self.params.values()), None)
        return first.dtype if first is not None else np.dtype(np.float64)

    def names(self) -> Iterable[str]:
        return self.params.keys()

    def copy(self) -> "WeightSet":
        return WeightSet(
            params={k: v.copy() for k, v in self.params.items()},
            buffers={k: v.copy() for k, v in self.buffers.items()},
            fingerprint=self.fingerprint,
            meta=dict(self.meta),
        )

    def astype(self, dtype: np.dtype) -> "WeightSet":
        return WeightSet(
            params={k: v.astype(dtype) for k, v in self.params.items()},
            buffers={k: v.astype(dtype) for k, v in self.buffers.items()},
            fingerprint=self.fingerprint,
            meta=dict(self.meta),
        )

    def check_against(self, spec: ModelSpec) -> None:
        """Raise ShapeError unless names and shapes match ``spec`` exactly"""
        expected = {**spec.parameter_shapes(), **spec.buffer_shapes()}
        actual = {k: tuple(v.shape) for k, v in {**self.params, **self.buffers}.items()}
        if expected != actual:
            missing = sorted(set(expected) - set(actual))
            extra = sorted(set(actual) - set(expected))
            wrong = sorted(k for k in set(expected) & set(actual) if expected[k] != actual[k])
            raise ShapeError(f"WeightSet does not match ModelSpec: missing={missing} extra={extra} wrong_shape={wrong}")

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in list(self.params.values()) + list(self.buffers.values()))

    def max_abs_diff(self, other: "WeightSet") -> float:
        _check_provenance(self, other)
        diffs = [float(np.max(np.abs(self.params[k] - other.params[k]))) for k in self.params if self.params[k].size]
        return max(diffs) if diffs else 0.0


def _check_provenance(a: WeightSet, b: WeightSet) -> None:
    if a.fingerprint != b.fingerprint:
        raise ShapeError(f"WeightSets come from different ModelSpecs ({a.fingerprint} vs {b.fingerprint})")
    if set(a.params) != set(b.params) or set(a.buffers) != set(b.buffers):
        raise ShapeError("WeightSets have different parameter names")
    for group_a, group_b in ((a.params, b.params), (a.buffers, b.buffers)):
        for name, value in group_a.items():
            if value.shape != group_b[name].shape:
                raise ShapeError(f"{name}: shape {value.shape} vs {group_b[name].shape}")


def combine_weights(a: WeightSet, b: WeightSet,
                    f: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> WeightSet:
    """
    Elementwise combination of two weight sets, running means included.

    Args:
        a: First weight set
        b: Second weight set from the same ModelSpec
        f: Elementwise binary function on arrays

    Returns:
        New WeightSet with ``f(a[k], b[k])`` for every parameter and buffer
    """
    _check_provenance(a, b)

    def apply(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        out = np.asarray(f(x, y), dtype=x.dtype)
        if out.shape != x.shape:
            raise ShapeError(f"combine function changed shape {x.shape} -> {out.shape}")
        return out.copy() if out is x or out is y else out

    return WeightSet(
        params={k: apply(a.params[k], b.params[k]) for k in a.params},
        buffers={k: apply(a.buffers[k], b.buffers[k]) for k in a.buffers},
        fingerprint=a.fingerprint,
        meta=dict(a.meta),
    )
