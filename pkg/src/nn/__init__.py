"""
Model construction, initialization and noisy forward evaluation
"""

from .spec import (
    AugmentSpec,
    LayerSpec,
    ModelSpec,
    canonical_convnet_spec,
    linear_spec,
    mlp_spec,
    parameter_count,
)
from .weights import WeightSet, combine_weights
from .forward import ForwardResult, NoiseConfig, forward, init_weights

__all__ = [
    "AugmentSpec",
    "LayerSpec",
    "ModelSpec",
    "canonical_convnet_spec",
    "linear_spec",
    "mlp_spec",
    "parameter_count",
    "WeightSet",
    "combine_weights",
    "ForwardResult",
    "NoiseConfig",
    "forward",
    "init_weights",
]
