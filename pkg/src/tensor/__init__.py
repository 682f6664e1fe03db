"""
Dense tensors with reverse-mode automatic differentiation
"""

from .primitives import PRIMITIVES, Primitive, get_primitive, register_primitive
from .tensor import Tape, Tensor, active_tape, apply_primitive, backward, stop_gradient
from .random import Bernoulli, Gaussian, RandomSource, UniformInt, draw_noise
from .gradcheck import numerical_gradient, relative_error
from . import ops

__all__ = [
    "PRIMITIVES",
    "Primitive",
    "get_primitive",
    "register_primitive",
    "Tape",
    "Tensor",
    "active_tape",
    "apply_primitive",
    "backward",
    "stop_gradient",
    "RandomSource",
    "Gaussian",
    "Bernoulli",
    "UniformInt",
    "draw_noise",
    "numerical_gradient",
    "relative_error",
    "ops",
]
