"""
Noisy forward evaluation and data-dependent initialization.

Weight-normalized layers compute ``W = v * g / ||v||`` with the norm taken over
every axis but the output channel. Mean-only batch norm subtracts the batch
mean per channel while training and the running mean in evaluation mode.
"""

import contextlib
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Union

import numpy as np
import structlog

from ..errors import EngineError, ShapeError
from ..tensor import ops
from ..tensor.random import Bernoulli, Gaussian, RandomSource, draw_noise
from ..tensor.tensor import Tape, Tensor
from .spec import LayerSpec, ModelSpec
from .weights import WeightSet

logger = structlog.get_logger()

RUNNING_MEAN_DECAY = 0.999
INIT_EPSILON = 1e-8
INIT_STDDEV = 0.05


@dataclass(frozen=True)
class NoiseConfig:
    """
    Noise settings for one side (student or teacher).

    ``input_noise`` and ``dropout`` override the per-layer values of the
    ModelSpec when set; 0 disables the source. ``augment`` is read by the data
    pipeline. Evaluation mode turns everything off and uses running means.
    """

    augment: bool = True
    input_noise: Optional[float] = None
    dropout: Optional[float] = None
    evaluation: bool = False

    @classmethod
    def evaluation_mode(cls) -> "NoiseConfig":
        return cls(augment=False, input_noise=0.0, dropout=0.0, evaluation=True)

    @classmethod
    def clean_training(cls) -> "NoiseConfig":
        """Training-mode batch norm without any stochastic noise"""
        return cls(augment=False, input_noise=0.0, dropout=0.0)


@dataclass
class ForwardResult:
    logits: List[Tensor]
    probabilities: Tensor
    preactivations: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def head_probabilities(self) -> List[Tensor]:
        return [self.probabilities] + [ops.softmax(z) for z in self.logits[1:]]


class _Pass:
    """State of one pass through the layers"""

    def __init__(self, spec: ModelSpec, weights: WeightSet, noise: NoiseConfig,
                 src: Optional[RandomSource], params: Optional[Mapping[str, Tensor]],
                 mode: str, update_stats: bool):
        self.spec = spec
        self.weights = weights
        self.noise = noise
        self.src = src
        self.params = params or {}
        self.mode = mode
        self.update_stats = update_stats
        self.dtype = weights.dtype
        self.preactivations: Dict[str, np.ndarray] = {}

    def param(self, key: str) -> Tensor:
        if key in self.params:
            return self.params[key]
        return Tensor.wrap(self.weights.params[key].view())

    def source(self, name: str) -> RandomSource:
        if self.src is None:
            raise EngineError(f"forward: training-mode noise '{name}' needs a RandomSource")
        return self.src.child(name)

    def layer(self, layer: LayerSpec, x: Tensor) -> Tensor:
        kind = layer.kind
        if kind == "gaussian-input-noise":
            sigma = layer.sigma if self.noise.input_noise is None else self.noise.input_noise
            if self.mode == "train" and sigma > 0:
                x = x + draw_noise(self.source("input_noise"), Gaussian(sigma), x.shape, self.dtype)
            return x
        if kind == "dropout":
            p = layer.p if self.noise.dropout is None else self.noise.dropout
            if self.mode == "train" and p > 0:
                keep = draw_noise(self.source(f"dropout/{layer.name}"), Bernoulli(1.0 - p), x.shape, self.dtype)
                x = x * Tensor.wrap(keep.data / (1.0 - p))
            return x
        if kind == "maxpool":
            return ops.maxpool2d(x, size=layer.size)
        if kind == "avgpool":
            return ops.avgpool2d(x, size=layer.size or x.shape[1])
        return self.parametric(layer, layer.name, x)

    def parametric(self, layer: LayerSpec, name: str, x: Tensor) -> Tensor:
        if layer.weight_norm:
            v = self.param(f"{name}.v")
            g = self.param(f"{name}.g")
            norm = ops.sqrt(ops.reduce_sum(ops.square(v), axis=tuple(range(v.ndim - 1))))
            w = v * (g / norm)
        else:
            w = self.param(f"{name}.w")

        if layer.kind == "conv":
            z = ops.conv2d(x, w, padding=layer.padding)
        else:
            if x.ndim != 2:
                x = x.reshape(x.shape[0], -1)
            z = x @ w

        axes = tuple(range(z.ndim - 1))
        if self.mode == "init" and layer.weight_norm:
            z = self._calibrate(layer, name, z, axes)
        elif layer.mean_only_bn:
            key = f"{name}.running_mean"
            if self.mode == "train":
                mean = ops.reduce_mean(z, axis=axes)
                z = z - mean
                if self.update_stats:
                    running = self.weights.buffers[key]
                    self.weights.buffers[key] = (
                        RUNNING_MEAN_DECAY * running + (1.0 - RUNNING_MEAN_DECAY) * mean.data
                    ).astype(running.dtype)
            else:
                z = z - Tensor.wrap(self.weights.buffers[key].view())

        if layer.bias:
            z = z + self.param(f"{name}.b")
        self.preactivations[name] = z.data
        if layer.activation:
            z = ops.leaky_relu(z, slope=self.spec.slope)
        return z

    def _calibrate(self, layer: LayerSpec, name: str, z: Tensor, axes: tuple) -> Tensor:
        # z is linear in g per channel, so rescaling g rescales z
        data = z.data
        mean = data.mean(axis=axes)
        scale = 1.0 / np.sqrt(data.var(axis=axes) + INIT_EPSILON)
        g_key = f"{name}.g"
        self.weights.params[g_key] = (self.weights.params[g_key] * scale).astype(self.dtype)
        if layer.mean_only_bn:
            self.weights.buffers[f"{name}.running_mean"] = (mean * scale).astype(self.dtype)
            return Tensor.wrap(((data - mean) * scale).astype(self.dtype))
        return Tensor.wrap((data * scale).astype(self.dtype))

    def run(self, inputs: Tensor) -> ForwardResult:
        expected = tuple(self.spec.input_shape)
        if inputs.ndim < 1 or tuple(inputs.shape[1:]) != expected:
            raise ShapeError(f"forward: expected inputs of shape (N, {', '.join(map(str, expected))}), got {inputs.shape}")
        x = inputs
        for layer in self.spec.trunk:
            x = self.layer(layer, x)
        logits = [self.parametric(self.spec.head, name, x) for name in self.spec.head_names()]
        return ForwardResult(logits=logits, probabilities=ops.softmax(logits[0]),
                             preactivations=self.preactivations)


def forward(
    spec: ModelSpec,
    weights: WeightSet,
    inputs: Union[np.ndarray, Tensor],
    noise: Optional[NoiseConfig] = None,
    src: Optional[RandomSource] = None,
    tape: Optional[Tape] = None,
    params: Optional[Mapping[str, Tensor]] = None,
    update_stats: Optional[bool] = None,
) -> ForwardResult:
    """
    Evaluate the model on a batch.

    Args:
        spec: Model description
        weights: Parameters and running means (running means updated in training mode)
        inputs: Batch shaped ``(N, *spec.input_shape)``
        noise: Noise settings; default is training mode with the model's noise
        src: Random source for input noise and dropout masks
        tape: Tape to record on; parameters become leaves named after their keys
        params: Pre-registered parameter tensors to use instead of ``weights.params``
        update_stats: Update running means (default: training mode only)

    Returns:
        ForwardResult with one logit tensor per head and head-0 probabilities
    """
    noise = noise or NoiseConfig()
    mode = "eval" if noise.evaluation else "train"
    if update_stats is None:
        update_stats = mode == "train"
    if mode == "eval":
        update_stats = False

    if not isinstance(inputs, Tensor):
        inputs = Tensor(inputs, dtype=weights.dtype)
    elif inputs.dtype != weights.dtype:
        inputs = Tensor.wrap(inputs.data.astype(weights.dtype))

    scope = tape if tape is not None else contextlib.nullcontext()
    with scope:
        if tape is not None and params is None:
            params = tape.watch(weights.params)
        return _Pass(spec, weights, noise, src, params, mode, update_stats).run(inputs)


def init_weights(
    spec: ModelSpec,
    src: RandomSource,
    calibration: Optional[np.ndarray] = None,
    calibration_size: int = 100,
    dtype: np.dtype = np.float64,
) -> WeightSet:
    """
    Initialize a weight set for ``spec``.

    Directions ``v`` are drawn from N(0, 0.05), biases start at zero. Each
    weight-normalized layer then gets its scale ``g`` set, in order, so its
    pre-activations have unit variance on the calibration batch; running means
    start at the calibration means.

    Args:
        spec: Model description
        src: Random source for the draws
        calibration: Calibration inputs (default: standard normal batch)
        calibration_size: Size of the default calibration batch
        dtype: Float width of the parameters

    Returns:
        Initialized WeightSet
    """
    weights = WeightSet.zeros(spec, dtype=dtype)
    generator = src.child("init").generator
    for name, shape in spec.parameter_shapes().items():
        if name.endswith(".v"):
            weights.params[name] = generator.normal(0.0, INIT_STDDEV, size=shape).astype(dtype)
        elif name.endswith(".g"):
            weights.params[name] = np.ones(shape, dtype=dtype)
        elif name.endswith(".w"):
            fan_in = int(np.prod(shape[:-1]))
            weights.params[name] = (generator.normal(0.0, 1.0, size=shape) / np.sqrt(fan_in)).astype(dtype)

    if calibration is None:
        calibration = src.child("calibration").generator.normal(
            0.0, 1.0, size=(calibration_size,) + tuple(spec.input_shape)
        )
    calibration = np.asarray(calibration, dtype=dtype)
    _Pass(spec, weights, NoiseConfig.clean_training(), None, None, "init", False).run(Tensor.wrap(calibration))

    if not weights.all_finite():
        raise ShapeError("init_weights produced non-finite parameters; check the calibration batch")
    logger.debug("Weights initialized", fingerprint=weights.fingerprint,
                 parameters=len(weights.params), calibration=int(calibration.shape[0]))
    return weights
