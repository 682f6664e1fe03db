from dataclasses import dataclass, field
from typing import Dict, Mapping, Union

import numpy as np

from ..errors import ShapeError
from ..nn.weights import WeightSet
from ..tensor.tensor import Tensor

ADAM_EPSILON = 1e-8

GradLike = Union[np.ndarray, Tensor]


@dataclass
class OptimizerState:
    """
    Adam moment accumulators.

    ``beta1_power`` and ``beta2_power`` are running products of the betas used
    so far, so bias correction stays exact when the betas are scheduled.
    """

    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    beta1_power: float = 1.0
    beta2_power: float = 1.0
    step: int = 0
    epsilon: float = ADAM_EPSILON
    last_hyper: Dict[str, float] = field(default_factory=dict)

    @classmethod
    def for_weights(cls, weights: WeightSet, epsilon: float = ADAM_EPSILON) -> "OptimizerState":
        return cls(
            m={k: np.zeros_like(p) for k, p in weights.params.items()},
            v={k: np.zeros_like(p) for k, p in weights.params.items()},
            epsilon=epsilon,
        )


def adam_step(opt: OptimizerState, weights: WeightSet, grads: Mapping[str, GradLike],
              lr: float, beta1: float = 0.9, beta2: float = 0.999) -> WeightSet:
    """
    One bias-corrected Adam update, applied to ``weights`` in place.

    Args:
        opt: Moment accumulators (updated)
        weights: Trainable weights (updated; running means untouched)
        grads: Gradient per parameter name
        lr: Learning rate for this step
        beta1: First-moment decay for this step
        beta2: Second-moment decay for this step

    Returns:
        The updated weights
    """
    missing = sorted(set(weights.params) - set(grads))
    extra = sorted(set(grads) - set(weights.params))
    if missing or extra:
        raise ShapeError(f"adam_step: gradient keys do not match weights (missing={missing}, extra={extra})")

    opt.step += 1
    opt.beta1_power *= beta1
    opt.beta2_power *= beta2
    correction1 = 1.0 - opt.beta1_power
    correction2 = 1.0 - opt.beta2_power

    for name, param in weights.params.items():
        grad = grads[name]
        grad = grad.data if isinstance(grad, Tensor) else np.asarray(grad)
        if grad.shape != param.shape:
            raise ShapeError(f"adam_step: gradient for {name} has shape {grad.shape}, expected {param.shape}")
        grad = grad.astype(param.dtype, copy=False)
        m = beta1 * opt.m[name] + (1.0 - beta1) * grad
        v = beta2 * opt.v[name] + (1.0 - beta2) * (grad * grad)
        opt.m[name] = m.astype(param.dtype, copy=False)
        opt.v[name] = v.astype(param.dtype, copy=False)
        m_hat = m / correction1
        v_hat = v / correction2
        weights.params[name] = (param - lr * m_hat / (np.sqrt(v_hat) + opt.epsilon)).astype(param.dtype, copy=False)

    opt.last_hyper = {"lr": lr, "beta1": beta1, "beta2": beta2}
    return weights
