"""
Primitive operations for the tape-based autodiff engine.

Each primitive is a stateless object with a ``forward`` that works on plain
numpy arrays and returns the output together with whatever context its
vector-Jacobian product needs. Image tensors use the batch x height x width x
channel layout throughout; convolution kernels are height x width x in x out.
"""

from typing import Any, Dict, Optional, Sequence, Tuple, Type

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import PrimitiveError, ShapeError

PRIMITIVES: Dict[str, "Primitive"] = {}

Arrays = Tuple[np.ndarray, ...]
Grads = Tuple[Optional[np.ndarray], ...]


def register_primitive(name: str):
    """Register a primitive class under ``name``"""

    def register_primitive_cls(cls: Type["Primitive"]) -> Type["Primitive"]:
        if name in PRIMITIVES:
            raise ValueError(f"Cannot register duplicate primitive ({name})")
        cls.name = name
        PRIMITIVES[name] = cls()
        return cls

    return register_primitive_cls


def get_primitive(name: str) -> "Primitive":
    try:
        return PRIMITIVES[name]
    except KeyError:
        raise PrimitiveError(f"Unknown primitive: {name!r}") from None


class Primitive:
    """Base class for differentiable operations"""

    name: str = ""
    arity: int = 1
    differentiable: bool = True
    required_attrs: Tuple[str, ...] = ()

    def validate(self, arrays: Arrays, attrs: Dict[str, Any]) -> None:
        if len(arrays) != self.arity:
            raise ShapeError(f"{self.name}: expected {self.arity} inputs, got {len(arrays)}")
        missing = [key for key in self.required_attrs if key not in attrs]
        if missing:
            raise ShapeError(f"{self.name}: missing attributes {missing}")
        self.check_shapes(arrays, attrs)

    def check_shapes(self, arrays: Arrays, attrs: Dict[str, Any]) -> None:
        pass

    def forward(self, arrays: Arrays, attrs: Dict[str, Any]) -> Tuple[np.ndarray, Any]:
        raise NotImplementedError

    def vjp(self, grad: np.ndarray, arrays: Arrays, out: np.ndarray, ctx: Any,
            attrs: Dict[str, Any]) -> Grads:
        raise NotImplementedError


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _normalize_axes(axis: Any, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


# ---------------------------------------------------------------- elementwise


class _Binary(Primitive):
    arity = 2

    def check_shapes(self, arrays: Arrays, attrs: Dict[str, Any]) -> None:
        a, b = arrays
        try:
            np.broadcast_shapes(a.shape, b.shape)
        except ValueError:
            raise ShapeError(
                f"{self.name}: cannot broadcast dims {a.shape} with {b.shape}"
            ) from None


@register_primitive("add")
class Add(_Binary):
    def forward(self, arrays, attrs):
        return arrays[0] + arrays[1], None

    def vjp(self, grad, arrays, out, ctx, attrs):
        return unbroadcast(grad, arrays[0].shape), unbroadcast(grad, arrays[1].shape)


@register_primitive("sub")
class Sub(_Binary):
    def forward(self, arrays, attrs):
        return arrays[0] - arrays[1], None

    def vjp(self, grad, arrays, out, ctx, attrs):
        return unbroadcast(grad, arrays[0].shape), unbroadcast(-grad, arrays[1].shape)


@register_primitive("mul")
class Mul(_Binary):
    def forward(self, arrays, attrs):
        return arrays[0] * arrays[1], None

    def vjp(self, grad, arrays, out, ctx, attrs):
        a, b = arrays
        return unbroadcast(grad * b, a.shape), unbroadcast(grad * a, b.shape)


@register_primitive("div")
class Div(_Binary):
    def forward(self, arrays, attrs):
        return arrays[0] / arrays[1], None

    def vjp(self, grad, arrays, out, ctx, attrs):
        a, b = arrays
        return unbroadcast(grad / b, a.shape), unbroadcast(-grad * a / (b * b), b.shape)


@register_primitive("neg")
class Neg(Primitive):
    def forward(self, arrays, attrs):
        return -arrays[0], None

    def vjp(self, grad, arrays, out, ctx, attrs):
        return (-grad,)


@register_primitive("square")
class Square(Primitive):
    def forward(self, arrays, attrs):
        return arrays[0] * arrays[0], None

    def vjp(self, grad, arrays, out, ctx, attrs):
        return (2.0 * arrays[0] * grad,)


@register_primitive("sqrt")
class Sqrt(Primitive):
    def forward(self, arrays, attrs):
        return np.sqrt(arrays[0]), None

    def vjp(self, grad, arrays, out, ctx, attrs):
        return (0.5 * grad / out,)


@register_primitive("exp")
class Exp(Primitive):
    def forward(self, arrays, attrs):
        return np.exp(arrays[0]), None

    def vjp(self, grad, arrays, out, ctx, attrs):
        return (grad * out,)


@register_primitive("log")
class Log(Primitive):
    def forward(self, arrays, attrs):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(arrays[0]), None

    def vjp(self, grad, arrays, out, ctx, attrs):
        return (grad / arrays[0],)


@register_primitive("leaky_relu")
class LeakyReLU(Primitive):
    required_attrs = ("slope",)

    def forward(self, arrays, attrs):
        x = arrays[0]
        positive = x > 0
        return np.where(positive, x, attrs["slope"] * x), positive

    def vjp(self, grad, arrays, out, ctx, attrs):
        return (np.where(ctx, grad, attrs["slope"] * grad),)


@register_primitive("clip_min")
class ClipMin(Primitive):
    required_attrs = ("floor",)

    def forward(self, arrays, attrs):
        x = arrays[0]
        passed = x > attrs["floor"]
        return np.where(passed, x, attrs["floor"]).astype(x.dtype, copy=False), passed

    def vjp(self, grad, arrays, out, ctx, attrs):
        return (np.where(ctx, grad, 0.0).astype(grad.dtype, copy=False),)


@register_primitive("stop_gradient")
class StopGradient(Primitive):
    differentiable = False

    def forward(self, arrays, attrs):
        return arrays[0], None

    def vjp(self, grad, arrays, out, ctx, attrs):
        return (None,)


# ----------------------------------------------------------------- reductions


@register_primitive("sum")
class Sum(Primitive):
    def forward(self, arrays, attrs):
        x = arrays[0]
        axes = _normalize_axes(attrs.get("axis"), x.ndim)
        return np.sum(x, axis=axes, keepdims=attrs.get("keepdims", False)), axes

    def vjp(self, grad, arrays, out, ctx, attrs):
        x = arrays[0]
        if not attrs.get("keepdims", False):
            grad = np.expand_dims(grad, ctx)
        return (np.broadcast_to(grad, x.shape).copy(),)


@register_primitive("mean")
class Mean(Primitive):
    def forward(self, arrays, attrs):
        x = arrays[0]
        axes = _normalize_axes(attrs.get("axis"), x.ndim)
        return np.mean(x, axis=axes, keepdims=attrs.get("keepdims", False)), axes

    def vjp(self, grad, arrays, out, ctx, attrs):
        x = arrays[0]
        count = int(np.prod([x.shape[a] for a in ctx])) if ctx else 1
        if not attrs.get("keepdims", False):
            grad = np.expand_dims(grad, ctx)
        return (np.broadcast_to(grad / count, x.shape).copy(),)


@register_primitive("reshape")
class Reshape(Primitive):
    required_attrs = ("shape",)

    def check_shapes(self, arrays, attrs):
        x = arrays[0]
        try:
            np.empty(x.shape, dtype=np.int8).reshape(attrs["shape"])
        except ValueError:
            raise ShapeError(f"reshape: cannot reshape dims {x.shape} to {attrs['shape']}") from None

    def forward(self, arrays, attrs):
        return arrays[0].reshape(attrs["shape"]), None

    def vjp(self, grad, arrays, out, ctx, attrs):
        return (grad.reshape(arrays[0].shape),)


# --------------------------------------------------------------------- linear


@register_primitive("matmul")
class MatMul(Primitive):
    arity = 2

    def check_shapes(self, arrays, attrs):
        a, b = arrays
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul: incompatible dims {a.shape} @ {b.shape}")

    def forward(self, arrays, attrs):
        return arrays[0] @ arrays[1], None

    def vjp(self, grad, arrays, out, ctx, attrs):
        a, b = arrays
        return grad @ b.T, a.T @ grad


# -------------------------------------------------------------------- softmax


@register_primitive("softmax")
class Softmax(Primitive):
    def forward(self, arrays, attrs):
        x = arrays[0]
        shifted = x - x.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=-1, keepdims=True), None

    def vjp(self, grad, arrays, out, ctx, attrs):
        return (out * (grad - np.sum(grad * out, axis=-1, keepdims=True)),)


@register_primitive("log_softmax")
class LogSoftmax(Primitive):
    def forward(self, arrays, attrs):
        x = arrays[0]
        shifted = x - x.max(axis=-1, keepdims=True)
        return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True)), None

    def vjp(self, grad, arrays, out, ctx, attrs):
        return (grad - np.exp(out) * grad.sum(axis=-1, keepdims=True),)


# ---------------------------------------------------------------- convolution


def conv_output_size(size: int, kernel: int, stride: int, padding: str) -> Tuple[int, int, int]:
    """Output size and (before, after) padding along one spatial axis"""
    if padding == "same":
        out = -(-size // stride)
        total = max((out - 1) * stride + kernel - size, 0)
        return out, total // 2, total - total // 2
    if padding == "valid":
        return (size - kernel) // stride + 1, 0, 0
    raise ShapeError(f"conv2d: padding must be 'same' or 'valid', got {padding!r}")


@register_primitive("conv2d")
class Conv2D(Primitive):
    """2-D cross-correlation over NHWC inputs with HWIO kernels"""

    arity = 2
    required_attrs = ("padding",)

    def check_shapes(self, arrays, attrs):
        x, k = arrays
        if x.ndim != 4 or k.ndim != 4:
            raise ShapeError(f"conv2d: expected 4-D input and kernel, got {x.shape} and {k.shape}")
        if x.shape[3] != k.shape[2]:
            raise ShapeError(
                f"conv2d: input channels {x.shape[3]} do not match kernel in-channels {k.shape[2]}"
            )
        stride = attrs.get("stride", 1)
        for axis, name in ((1, "height"), (2, "width")):
            out, _, _ = conv_output_size(x.shape[axis], k.shape[axis - 1], stride, attrs["padding"])
            if out < 1:
                raise ShapeError(
                    f"conv2d: {name} {x.shape[axis]} too small for kernel {k.shape[axis - 1]} "
                    f"with {attrs['padding']} padding"
                )

    def forward(self, arrays, attrs):
        x, k = arrays
        stride = attrs.get("stride", 1)
        kh, kw = k.shape[0], k.shape[1]
        ho, pt, pb = conv_output_size(x.shape[1], kh, stride, attrs["padding"])
        wo, pl, pr = conv_output_size(x.shape[2], kw, stride, attrs["padding"])
        xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0))) if (pt or pb or pl or pr) else x
        windows = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride][:, :ho, :wo]
        out = np.tensordot(windows, k.transpose(2, 0, 1, 3), axes=([3, 4, 5], [0, 1, 2]))
        return out, (xp, (pt, pl), (ho, wo))

    def vjp(self, grad, arrays, out, ctx, attrs):
        x, k = arrays
        xp, (pt, pl), (ho, wo) = ctx
        stride = attrs.get("stride", 1)
        kh, kw = k.shape[0], k.shape[1]
        windows = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride][:, :ho, :wo]
        grad_k = np.tensordot(windows, grad, axes=([0, 1, 2], [0, 1, 2])).transpose(1, 2, 0, 3)
        grad_windows = np.tensordot(grad, k.transpose(2, 0, 1, 3), axes=([3], [3]))
        grad_xp = np.zeros(xp.shape, dtype=grad.dtype)
        for i in range(kh):
            for j in range(kw):
                grad_xp[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :] += grad_windows[..., i, j]
        grad_x = grad_xp[:, pt:pt + x.shape[1], pl:pl + x.shape[2], :]
        return grad_x, grad_k


class _Pool(Primitive):
    required_attrs = ("size",)

    def check_shapes(self, arrays, attrs):
        x = arrays[0]
        size = attrs["size"]
        if x.ndim != 4:
            raise ShapeError(f"{self.name}: expected 4-D input, got {x.shape}")
        if size < 1 or x.shape[1] < size or x.shape[2] < size:
            raise ShapeError(f"{self.name}: window {size}x{size} does not fit dims {x.shape[1:3]}")

    @staticmethod
    def _windows(x: np.ndarray, size: int) -> np.ndarray:
        n, h, w, c = x.shape
        ho, wo = h // size, w // size
        cropped = x[:, :ho * size, :wo * size, :]
        return cropped.reshape(n, ho, size, wo, size, c).transpose(0, 1, 3, 5, 2, 4).reshape(
            n, ho, wo, c, size * size
        )

    @staticmethod
    def _unwindow(grad_windows: np.ndarray, shape: Sequence[int], size: int) -> np.ndarray:
        n, ho, wo, c, _ = grad_windows.shape
        grad_x = np.zeros(shape, dtype=grad_windows.dtype)
        grad_x[:, :ho * size, :wo * size, :] = grad_windows.reshape(
            n, ho, wo, c, size, size
        ).transpose(0, 1, 4, 2, 5, 3).reshape(n, ho * size, wo * size, c)
        return grad_x


@register_primitive("maxpool2d")
class MaxPool2D(_Pool):
    def forward(self, arrays, attrs):
        windows = self._windows(arrays[0], attrs["size"])
        index = windows.argmax(axis=-1)[..., None]
        return np.take_along_axis(windows, index, axis=-1)[..., 0], index

    def vjp(self, grad, arrays, out, ctx, attrs):
        x = arrays[0]
        size = attrs["size"]
        n, h, w, c = x.shape
        grad_windows = np.zeros((n, h // size, w // size, c, size * size), dtype=grad.dtype)
        np.put_along_axis(grad_windows, ctx, grad[..., None], axis=-1)
        return (self._unwindow(grad_windows, x.shape, size),)


@register_primitive("avgpool2d")
class AvgPool2D(_Pool):
    def forward(self, arrays, attrs):
        return self._windows(arrays[0], attrs["size"]).mean(axis=-1), None

    def vjp(self, grad, arrays, out, ctx, attrs):
        x = arrays[0]
        size = attrs["size"]
        spread = np.repeat(grad[..., None] / (size * size), size * size, axis=-1)
        return (self._unwindow(spread, x.shape, size),)
