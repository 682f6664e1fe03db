"""
Immutable tensors and the recording tape.

A ``Tensor`` wraps a read-only numpy array. While a ``Tape`` is active
(``with tape: ...``) every primitive applied to at least one tracked tensor is
appended to it; ``backward`` replays the tape in reverse to produce gradients
for the named leaves.
"""

from contextvars import ContextVar
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import structlog

from ..errors import NonFiniteError, ShapeError, TapeError
from .primitives import Primitive, get_primitive

logger = structlog.get_logger()

_ACTIVE_TAPE: ContextVar[Optional["Tape"]] = ContextVar("active_tape", default=None)

Scalar = Union[int, float]
TensorLike = Union["Tensor", np.ndarray, Scalar]


class Tensor:
    """Dense n-dimensional array of 32- or 64-bit floats"""

    __slots__ = ("_data", "_tape", "_slot")

    def __init__(self, data: Any, dtype: Optional[Any] = None):
        array = np.array(data, dtype=dtype, copy=True)
        if dtype is None and not np.issubdtype(array.dtype, np.floating):
            array = array.astype(np.float64)
        array.setflags(write=False)
        self._data = array
        self._tape: Optional["Tape"] = None
        self._slot: Optional[int] = None

    @classmethod
    def wrap(cls, array: np.ndarray) -> "Tensor":
        """Wrap an array without copying; the array must not be mutated afterwards"""
        tensor = cls.__new__(cls)
        if array.flags.writeable:
            array.setflags(write=False)
        tensor._data = array
        tensor._tape = None
        tensor._slot = None
        return tensor

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def shape(self) -> Tuple[int, ...]:
        return self._data.shape

    @property
    def dtype(self) -> np.dtype:
        return self._data.dtype

    @property
    def ndim(self) -> int:
        return self._data.ndim

    @property
    def tracked(self) -> bool:
        return self._slot is not None

    def numpy(self) -> np.ndarray:
        return np.array(self._data, copy=True)

    def item(self) -> float:
        if self._data.size != 1:
            raise ShapeError(f"item: tensor of shape {self.shape} is not a scalar")
        return float(self._data.reshape(-1)[0])

    def __repr__(self) -> str:
        status = f", slot={self._slot}" if self.tracked else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{status})"

    def _coerce(self, other: TensorLike) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other), dtype=self.dtype)

    def __add__(self, other: TensorLike) -> "Tensor":
        return apply_primitive("add", [self, self._coerce(other)])

    def __radd__(self, other: TensorLike) -> "Tensor":
        return apply_primitive("add", [self._coerce(other), self])

    def __sub__(self, other: TensorLike) -> "Tensor":
        return apply_primitive("sub", [self, self._coerce(other)])

    def __rsub__(self, other: TensorLike) -> "Tensor":
        return apply_primitive("sub", [self._coerce(other), self])

    def __mul__(self, other: TensorLike) -> "Tensor":
        return apply_primitive("mul", [self, self._coerce(other)])

    def __rmul__(self, other: TensorLike) -> "Tensor":
        return apply_primitive("mul", [self._coerce(other), self])

    def __truediv__(self, other: TensorLike) -> "Tensor":
        return apply_primitive("div", [self, self._coerce(other)])

    def __rtruediv__(self, other: TensorLike) -> "Tensor":
        return apply_primitive("div", [self._coerce(other), self])

    def __neg__(self) -> "Tensor":
        return apply_primitive("neg", [self])

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return apply_primitive("matmul", [self, other])

    def sum(self, axis: Any = None, keepdims: bool = False) -> "Tensor":
        return apply_primitive("sum", [self], {"axis": axis, "keepdims": keepdims})

    def mean(self, axis: Any = None, keepdims: bool = False) -> "Tensor":
        return apply_primitive("mean", [self], {"axis": axis, "keepdims": keepdims})

    def reshape(self, *shape: int) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return apply_primitive("reshape", [self], {"shape": tuple(shape)})


@dataclass
class LeafInfo:
    name: str
    stop_gradient: bool


@dataclass
class TapeNode:
    primitive: Primitive
    attrs: Dict[str, Any]
    inputs: Tuple[Optional[int], ...]
    arrays: Tuple[np.ndarray, ...]
    output: int
    out: np.ndarray
    ctx: Any


@dataclass
class Tape:
    """Ordered record of executed primitives"""

    nodes: List[TapeNode] = field(default_factory=list)
    leaves: Dict[int, LeafInfo] = field(default_factory=dict)
    _names: Dict[str, int] = field(default_factory=dict)
    _next_slot: int = 0
    _tokens: List[Any] = field(default_factory=list)

    def __enter__(self) -> "Tape":
        self._tokens.append(_ACTIVE_TAPE.set(self))
        return self

    def __exit__(self, *exc_info: Any) -> None:
        _ACTIVE_TAPE.reset(self._tokens.pop())

    def _claim_slot(self, tensor: Tensor) -> int:
        slot = self._next_slot
        self._next_slot += 1
        tensor._tape = self
        tensor._slot = slot
        return slot

    def leaf(self, value: Union[np.ndarray, Tensor], name: str, stop_gradient: bool = False) -> Tensor:
        """
        Register a named leaf.

        Args:
            value: Leaf value (copied)
            name: Unique leaf name; gradients are keyed by it
            stop_gradient: Treat the leaf as a constant under differentiation

        Returns:
            The tracked leaf tensor
        """
        if name in self._names:
            raise TapeError(f"Duplicate leaf name on tape: {name!r}")
        array = value.data if isinstance(value, Tensor) else np.asarray(value)
        tensor = Tensor(array, dtype=array.dtype if np.issubdtype(array.dtype, np.floating) else None)
        slot = self._claim_slot(tensor)
        self.leaves[slot] = LeafInfo(name=name, stop_gradient=stop_gradient)
        self._names[name] = slot
        return tensor

    def watch(self, arrays: Mapping[str, np.ndarray], prefix: str = "",
              stop_gradient: bool = False) -> Dict[str, Tensor]:
        """Register every array of a mapping as a leaf named ``prefix + key``"""
        return {
            key: self.leaf(value, f"{prefix}{key}", stop_gradient=stop_gradient)
            for key, value in arrays.items()
        }

    def is_live(self, tensor: Tensor) -> bool:
        """Whether gradients can flow into ``tensor`` on this tape"""
        if tensor._tape is not self or tensor._slot is None:
            return False
        info = self.leaves.get(tensor._slot)
        return info is None or not info.stop_gradient


def active_tape() -> Optional[Tape]:
    return _ACTIVE_TAPE.get()


def _as_tensor(value: TensorLike, dtype: Optional[np.dtype]) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value), dtype=dtype)


def apply_primitive(op: str, inputs: Sequence[TensorLike],
                    attrs: Optional[Dict[str, Any]] = None) -> Tensor:
    """
    Evaluate a primitive and record it on the active tape.

    Args:
        op: Primitive id (e.g. ``conv2d``, ``leaky_relu``)
        inputs: Input tensors
        attrs: Primitive attributes (padding, stride, slope, ...)

    Returns:
        Output tensor
    """
    primitive = get_primitive(op)
    attrs = dict(attrs or {})
    first_dtype = next((t.dtype for t in inputs if isinstance(t, Tensor)), None)
    tensors = [_as_tensor(t, first_dtype) for t in inputs]
    arrays = tuple(t.data for t in tensors)
    primitive.validate(arrays, attrs)

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        out, ctx = primitive.forward(arrays, attrs)
    out = np.asarray(out)
    dtype = np.result_type(*[a.dtype for a in arrays])
    if out.dtype != dtype:
        out = out.astype(dtype)

    if not np.all(np.isfinite(out)):
        logger.error("Non-finite primitive output", primitive=op,
                     input_shapes=[a.shape for a in arrays])
        raise NonFiniteError(
            f"{op} produced non-finite values (input shapes {[a.shape for a in arrays]})"
        )

    result = Tensor.wrap(out)
    tape = _ACTIVE_TAPE.get()
    if tape is None or not primitive.differentiable:
        return result
    for tensor in tensors:
        if tensor._tape is not None and tensor._tape is not tape:
            raise TapeError(f"{op}: input recorded on a different tape")
    slots = tuple(tensor._slot if tape.is_live(tensor) else None for tensor in tensors)
    if all(slot is None for slot in slots):
        return result
    output_slot = tape._claim_slot(result)
    tape.nodes.append(
        TapeNode(primitive=primitive, attrs=attrs, inputs=slots, arrays=arrays,
                 output=output_slot, out=out, ctx=ctx)
    )
    return result


def backward(tape: Tape, output: Tensor) -> Dict[str, Tensor]:
    """
    Reverse-mode differentiation of a scalar output.

    Args:
        tape: Tape that recorded the computation
        output: Scalar tensor produced on the tape

    Returns:
        Mapping from leaf name to gradient for every live leaf reached
    """
    if output._tape is not tape or output._slot is None:
        raise TapeError("backward: output was not produced on this tape")
    if output.data.size != 1:
        raise ShapeError(f"backward: output must be scalar, got shape {output.shape}")

    if output._slot in tape.leaves:
        info = tape.leaves[output._slot]
        if info.stop_gradient:
            return {}
        return {info.name: Tensor.wrap(np.ones(output.shape, dtype=output.dtype))}

    grads: Dict[int, np.ndarray] = {output._slot: np.ones(output.shape, dtype=output.dtype)}
    for node in reversed(tape.nodes):
        grad = grads.get(node.output)
        if grad is None:
            continue
        input_grads = node.primitive.vjp(grad, node.arrays, node.out, node.ctx, node.attrs)
        for slot, array, input_grad in zip(node.inputs, node.arrays, input_grads):
            if slot is None or input_grad is None:
                continue
            input_grad = np.asarray(input_grad, dtype=array.dtype)
            grads[slot] = grads[slot] + input_grad if slot in grads else input_grad

    return {
        info.name: Tensor.wrap(grads[slot])
        for slot, info in tape.leaves.items()
        if not info.stop_gradient and slot in grads
    }


def stop_gradient(tensor: Tensor) -> Tensor:
    """Identity whose output is a constant under differentiation"""
    return apply_primitive("stop_gradient", [tensor])
