"""
Declarative model descriptions.

A ``ModelSpec`` is an ordered list of ``LayerSpec`` entries ending in a softmax
head. Parameter names and shapes are fully determined by the ``ModelSpec``, which is
what makes two weight sets of the same model elementwise combinable.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

from ..errors import ShapeError
from ..tensor.primitives import conv_output_size

LAYER_KINDS = ("conv", "dense", "maxpool", "avgpool", "dropout", "gaussian-input-noise", "softmax-head")
PARAMETRIC_KINDS = ("conv", "dense", "softmax-head")

Shape = Tuple[int, ...]


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    name: str
    filters: Optional[int] = None
    kernel: int = 3
    padding: str = "same"
    units: Optional[int] = None
    size: Optional[int] = None
    p: float = 0.0
    sigma: float = 0.0
    activation: bool = True
    weight_norm: bool = True
    mean_only_bn: bool = True
    bias: bool = True

    def __post_init__(self):
        problems = []
        if self.kind not in LAYER_KINDS:
            problems.append(f"unknown kind {self.kind!r}")
        if self.kind == "conv":
            if not self.filters or self.filters < 1:
                problems.append("conv needs filters >= 1")
            if self.kernel < 1:
                problems.append("conv needs kernel >= 1")
            if self.padding not in ("same", "valid"):
                problems.append(f"padding must be same or valid, got {self.padding!r}")
        if self.kind in ("dense", "softmax-head") and (not self.units or self.units < 1):
            problems.append(f"{self.kind} needs units >= 1")
        if self.kind == "maxpool" and (not self.size or self.size < 1):
            problems.append("maxpool needs size >= 1")
        if self.kind == "dropout" and not 0.0 <= self.p < 1.0:
            problems.append(f"dropout p must lie in [0, 1), got {self.p}")
        if self.kind == "gaussian-input-noise" and self.sigma < 0:
            problems.append(f"noise sigma must be >= 0, got {self.sigma}")
        if problems:
            raise ShapeError(f"Layer {self.name!r}: " + "; ".join(problems))

    @property
    def parametric(self) -> bool:
        return self.kind in PARAMETRIC_KINDS


@dataclass(frozen=True)
class AugmentSpec:
    """Input augmentation a model advertises to the data pipeline"""

    translate_max: int = 0
    flip: bool = False


@dataclass(frozen=True)
class ModelSpec:
    input_shape: Shape
    layers: Tuple[LayerSpec, ...]
    head_count: int = 1
    slope: float = 0.1
    augment: AugmentSpec = field(default_factory=AugmentSpec)

    def __post_init__(self):
        if self.head_count not in (1, 2):
            raise ShapeError(f"head_count must be 1 or 2, got {self.head_count}")
        if not self.layers or self.layers[-1].kind != "softmax-head":
            raise ShapeError("ModelSpec must end with a softmax-head layer")
        if any(layer.kind == "softmax-head" for layer in self.layers[:-1]):
            raise ShapeError("softmax-head may only appear as the final layer")
        names = [layer.name for layer in self.layers]
        if len(set(names)) != len(names):
            raise ShapeError(f"Duplicate layer names in {names}")
        self.layer_shapes()

    @property
    def n_classes(self) -> int:
        return int(self.layers[-1].units)

    @property
    def trunk(self) -> Tuple[LayerSpec, ...]:
        return self.layers[:-1]

    @property
    def head(self) -> LayerSpec:
        return self.layers[-1]

    def head_names(self) -> List[str]:
        return [f"{self.head.name}{k}" for k in range(self.head_count)]

    def layer_shapes(self) -> List[Shape]:
        """Static output shape of every layer (per example)"""
        shapes = []
        shape = tuple(self.input_shape)
        for layer in self.layers:
            shape = _output_shape(layer, shape)
            shapes.append(shape)
        return shapes

    def parameter_shapes(self) -> Dict[str, Shape]:
        """Trainable parameter names and shapes in a fixed order"""
        shapes: Dict[str, Shape] = {}
        shape = tuple(self.input_shape)
        for layer in self.trunk:
            if layer.parametric:
                shapes.update(_layer_parameters(layer, layer.name, shape))
            shape = _output_shape(layer, shape)
        for head_name in self.head_names():
            shapes.update(_layer_parameters(self.head, head_name, shape))
        return shapes

    def buffer_shapes(self) -> Dict[str, Shape]:
        """Non-trainable running means for mean-only batch norm"""
        buffers: Dict[str, Shape] = {}
        names = [(layer, layer.name) for layer in self.trunk if layer.parametric]
        names += [(self.head, name) for name in self.head_names()]
        for layer, name in names:
            if layer.mean_only_bn:
                buffers[f"{name}.running_mean"] = (_width(layer),)
        return buffers

    def to_dict(self) -> Dict[str, Any]:
        return {
            "input_shape": list(self.input_shape),
            "head_count": self.head_count,
            "slope": self.slope,
            "augment": asdict(self.augment),
            "layers": [asdict(layer) for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelSpec":
        return cls(
            input_shape=tuple(data["input_shape"]),
            layers=tuple(LayerSpec(**layer) for layer in data["layers"]),
            head_count=int(data.get("head_count", 1)),
            slope=float(data.get("slope", 0.1)),
            augment=AugmentSpec(**data.get("augment", {})),
        )

    def fingerprint(self) -> str:
        """Stable identity of the parameter layout"""
        payload = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()[:16]


def _width(layer: LayerSpec) -> int:
    return int(layer.filters if layer.kind == "conv" else layer.units)


def _layer_parameters(layer: LayerSpec, name: str, in_shape: Shape) -> Dict[str, Shape]:
    width = _width(layer)
    if layer.kind == "conv":
        weight_shape: Shape = (layer.kernel, layer.kernel, in_shape[-1], width)
    else:
        fan_in = 1
        for dim in in_shape:
            fan_in *= dim
        weight_shape = (fan_in, width)
    params: Dict[str, Shape] = {}
    if layer.weight_norm:
        params[f"{name}.v"] = weight_shape
        params[f"{name}.g"] = (width,)
    else:
        params[f"{name}.w"] = weight_shape
    if layer.bias:
        params[f"{name}.b"] = (width,)
    return params


def _output_shape(layer: LayerSpec, shape: Shape) -> Shape:
    kind = layer.kind
    if kind in ("dropout", "gaussian-input-noise"):
        return shape
    if kind in ("dense", "softmax-head"):
        return (int(layer.units),)
    if len(shape) != 3:
        raise ShapeError(f"Layer {layer.name!r} ({kind}) needs an image-shaped input, got {shape}")
    height, width, channels = shape
    if kind == "conv":
        ho, _, _ = conv_output_size(height, layer.kernel, 1, layer.padding)
        wo, _, _ = conv_output_size(width, layer.kernel, 1, layer.padding)
        if ho < 1 or wo < 1:
            raise ShapeError(
                f"Layer {layer.name!r}: {height}x{width} input too small for "
                f"{layer.kernel}x{layer.kernel} {layer.padding} convolution"
            )
        return (ho, wo, int(layer.filters))
    size = layer.size if layer.size else height
    if kind == "avgpool" and layer.size is None and height != width:
        raise ShapeError(f"Layer {layer.name!r}: global average pool needs a square input, got {shape}")
    if height < size or width < size:
        raise ShapeError(f"Layer {layer.name!r}: pool {size}x{size} does not fit {height}x{width}")
    return (height // size, width // size, channels)


def canonical_convnet_spec(
    input_shape: Sequence[int] = (32, 32, 3),
    flip_allowed: bool = True,
    width_scale: float = 1.0,
    n_classes: int = 10,
    input_noise: float = 0.15,
    dropout: float = 0.5,
    slope: float = 0.1,
    head_count: int = 1,
    translate_max: int = 2,
) -> ModelSpec:
    """
    The 13-layer ConvNet with mean-only batch norm and weight norm.

    The canonical form takes 32x32x3 images. Smaller inputs drop pooling
    stages (with their dropout) from the end of the chain; filter counts are
    multiplied by ``width_scale``.

    Args:
        input_shape: Image shape (height, width, channels)
        flip_allowed: Advertise horizontal flips as augmentation
        width_scale: Multiplier on every filter count
        n_classes: Output width of the softmax head
        input_noise: Gaussian input noise sigma
        dropout: Dropout probability after each pooling stage
        slope: Leaky rectifier slope
        head_count: 1, or 2 for the dual-output head
        translate_max: Advertised random translation range

    Returns:
        ModelSpec for the network
    """
    if len(input_shape) != 3:
        raise ShapeError(f"ConvNet input must be height x width x channels, got {tuple(input_shape)}")
    height, width, channels = (int(d) for d in input_shape)
    if height != width:
        raise ShapeError(f"ConvNet input must be square, got {height}x{width}")
    if height < 8:
        raise ShapeError(f"Input {height}x{width} too small for the pooling chain (minimum 8x8)")
    if translate_max >= height:
        raise ShapeError(f"translate_max {translate_max} must be smaller than the image side {height}")

    pool_stages = 0
    side = height
    while pool_stages < 2 and side // 2 >= 8:
        side //= 2
        pool_stages += 1

    def filters(count: int) -> int:
        return max(1, int(round(count * width_scale)))

    layers: List[LayerSpec] = [LayerSpec(kind="gaussian-input-noise", name="input_noise", sigma=input_noise)]
    for block, count in enumerate((128, 256), start=1):
        for index in range(1, 4):
            layers.append(LayerSpec(kind="conv", name=f"conv{block}_{index}", filters=filters(count)))
        if block <= pool_stages:
            layers.append(LayerSpec(kind="maxpool", name=f"pool{block}", size=2))
            layers.append(LayerSpec(kind="dropout", name=f"dropout{block}", p=dropout))
    layers.append(LayerSpec(kind="conv", name="conv3_1", filters=filters(512), padding="valid"))
    layers.append(LayerSpec(kind="conv", name="conv3_2", filters=filters(256), kernel=1))
    layers.append(LayerSpec(kind="conv", name="conv3_3", filters=filters(128), kernel=1))
    layers.append(LayerSpec(kind="avgpool", name="global_pool"))
    layers.append(LayerSpec(kind="softmax-head", name="head", units=n_classes, activation=False))

    return ModelSpec(
        input_shape=(height, width, channels),
        layers=tuple(layers),
        head_count=head_count,
        slope=slope,
        augment=AugmentSpec(translate_max=translate_max, flip=flip_allowed),
    )


def mlp_spec(
    input_dim: int,
    hidden: Sequence[int] = (100, 100),
    n_classes: int = 2,
    input_noise: float = 0.15,
    dropout: float = 0.5,
    slope: float = 0.1,
    head_count: int = 1,
) -> ModelSpec:
    """Dense counterpart of the ConvNet for feature-vector datasets"""
    if input_dim < 1:
        raise ShapeError(f"input_dim must be >= 1, got {input_dim}")
    layers: List[LayerSpec] = [LayerSpec(kind="gaussian-input-noise", name="input_noise", sigma=input_noise)]
    for index, units in enumerate(hidden, start=1):
        layers.append(LayerSpec(kind="dense", name=f"dense{index}", units=int(units)))
        layers.append(LayerSpec(kind="dropout", name=f"dropout{index}", p=dropout))
    layers.append(LayerSpec(kind="softmax-head", name="head", units=n_classes, activation=False))
    return ModelSpec(input_shape=(int(input_dim),), layers=tuple(layers), head_count=head_count, slope=slope)


def linear_spec(input_dim: int, n_classes: int, bias: bool = False, head_count: int = 1) -> ModelSpec:
    """Plain softmax regression without normalization; small enough to check by hand"""
    head = LayerSpec(kind="softmax-head", name="head", units=n_classes, activation=False,
                     weight_norm=False, mean_only_bn=False, bias=bias)
    return ModelSpec(input_shape=(int(input_dim),), layers=(head,), head_count=head_count)


def parameter_count(spec: ModelSpec) -> int:
    """Number of trainable scalars"""
    total = 0
    for shape in spec.parameter_shapes().values():
        count = 1
        for dim in shape:
            count *= dim
        total += count
    return total
