from dataclasses import dataclass

from ..errors import ConfigError
from ..nn.weights import WeightSet, combine_weights


@dataclass
class EMAState:
    """Teacher weights θ' and the decay used for the most recent update"""

    weights: WeightSet
    decay: float = 0.999
    updates: int = 0

    @classmethod
    def from_student(cls, student: WeightSet, decay: float = 0.999) -> "EMAState":
        """Start the teacher as a copy of the initial student weights"""
        return cls(weights=student.copy(), decay=decay)


def ema_update(ema: EMAState, student: WeightSet, alpha: float) -> EMAState:
    """
    ``θ' <- α θ' + (1 - α) θ`` for every parameter and running mean.

    α = 0 copies the student exactly; α = 1 leaves the teacher unchanged.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError([f"EMA decay must lie in [0, 1], got {alpha}"])
    if alpha == 0.0:
        ema.weights = combine_weights(ema.weights, student, lambda teacher, current: current)
    elif alpha == 1.0:
        ema.weights = combine_weights(ema.weights, student, lambda teacher, current: teacher)
    else:
        ema.weights = combine_weights(
            ema.weights, student, lambda teacher, current: alpha * teacher + (1.0 - alpha) * current
        )
    ema.decay = alpha
    ema.updates += 1
    return ema
