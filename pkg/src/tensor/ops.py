"""Functional wrappers over the primitive registry"""

from typing import Any, Optional

from .tensor import Tensor, apply_primitive


def conv2d(x: Tensor, kernel: Tensor, padding: str = "same", stride: int = 1) -> Tensor:
    return apply_primitive("conv2d", [x, kernel], {"padding": padding, "stride": stride})


def maxpool2d(x: Tensor, size: int = 2) -> Tensor:
    return apply_primitive("maxpool2d", [x], {"size": size})


def avgpool2d(x: Tensor, size: int) -> Tensor:
    return apply_primitive("avgpool2d", [x], {"size": size})


def leaky_relu(x: Tensor, slope: float = 0.1) -> Tensor:
    return apply_primitive("leaky_relu", [x], {"slope": slope})


def softmax(x: Tensor) -> Tensor:
    return apply_primitive("softmax", [x])


def log_softmax(x: Tensor) -> Tensor:
    return apply_primitive("log_softmax", [x])


def log(x: Tensor) -> Tensor:
    return apply_primitive("log", [x])


def exp(x: Tensor) -> Tensor:
    return apply_primitive("exp", [x])


def sqrt(x: Tensor) -> Tensor:
    return apply_primitive("sqrt", [x])


def square(x: Tensor) -> Tensor:
    return apply_primitive("square", [x])


def clip_min(x: Tensor, floor: float) -> Tensor:
    return apply_primitive("clip_min", [x], {"floor": floor})


def reduce_sum(x: Tensor, axis: Optional[Any] = None, keepdims: bool = False) -> Tensor:
    return apply_primitive("sum", [x], {"axis": axis, "keepdims": keepdims})


def reduce_mean(x: Tensor, axis: Optional[Any] = None, keepdims: bool = False) -> Tensor:
    return apply_primitive("mean", [x], {"axis": axis, "keepdims": keepdims})
