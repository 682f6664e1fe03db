"""
Scalar schedules for learning rate, Adam betas, EMA decay and cost weights.
"""

import math
from dataclasses import dataclass
from typing import Optional

from ..errors import ConfigError

BETA1_FLOOR = 0.5


def rampup_sigmoid(step: float, ramp_steps: float) -> float:
    """``exp(-5 (1 - x)^2)`` with ``x = clamp(step / ramp_steps, 0, 1)``; 1 when ramp_steps is 0"""
    if ramp_steps < 0:
        raise ConfigError([f"ramp_steps must be >= 0, got {ramp_steps}"])
    if ramp_steps == 0:
        return 1.0
    x = min(max(step / ramp_steps, 0.0), 1.0)
    return math.exp(-5.0 * (1.0 - x) ** 2)


def rampdown_sigmoid(step: float, start: float, total: float) -> float:
    """
    Multiplier that is 1 before ``start`` and falls to ``exp(-12.5)`` at ``total``.

    With ``x`` the elapsed fraction of the window, the value is
    ``1 - (1 - exp(-12.5 x^2))``.
    """
    if start > total:
        raise ConfigError([f"ramp-down start {start} is after total {total}"])
    if step < start:
        return 1.0
    if total == start:
        return math.exp(-12.5)
    x = min((step - start) / (total - start), 1.0)
    return 1.0 - (1.0 - math.exp(-12.5 * x * x))


def cosine_anneal(step: float, horizon: float, max_value: float) -> float:
    if horizon <= 0:
        raise ConfigError([f"cosine horizon must be > 0, got {horizon}"])
    if step < 0:
        raise ConfigError([f"step must be >= 0, got {step}"])
    return max_value * 0.5 * (1.0 + math.cos(math.pi * min(step / horizon, 1.0)))


def two_phase(step: float, switch_step: float, before: float, after: float) -> float:
    return before if step < switch_step else after


@dataclass(frozen=True)
class ScheduleConfig:
    """
    Step-indexed hyperparameter schedule.

    Attributes:
        total_steps: Length of training
        rampup_steps: Sigmoid ramp-up length for the consistency weight (and the
            learning rate when ``rampup_lr``)
        rampdown_steps: Length of the final ramp-down window (0 disables)
        phase_switch_step: First step using the "after" values of beta2 and EMA decay
        cosine_horizon: Cosine annealing horizon; replaces the ramp-down when set
    """

    total_steps: int
    rampup_steps: int = 0
    rampdown_steps: int = 0
    phase_switch_step: int = 0
    lr_max: float = 0.003
    rampup_lr: bool = True
    beta1: float = 0.9
    beta2_before: float = 0.99
    beta2_after: float = 0.999
    ema_before: float = 0.99
    ema_after: float = 0.999
    cosine_horizon: Optional[int] = None

    def __post_init__(self):
        violations = []
        for name in ("total_steps", "rampup_steps", "rampdown_steps", "phase_switch_step"):
            if getattr(self, name) < 0:
                violations.append(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.phase_switch_step > self.total_steps:
            violations.append(f"phase_switch_step {self.phase_switch_step} exceeds total_steps {self.total_steps}")
        if self.rampdown_steps > self.total_steps:
            violations.append(f"rampdown_steps {self.rampdown_steps} exceeds total_steps {self.total_steps}")
        if self.cosine_horizon is not None and self.cosine_horizon <= 0:
            violations.append(f"cosine_horizon must be > 0, got {self.cosine_horizon}")
        if violations:
            raise ConfigError(violations)

    @property
    def rampdown_start(self) -> int:
        return self.total_steps - self.rampdown_steps


@dataclass(frozen=True)
class ScheduleValues:
    lr: float
    beta1: float
    beta2: float
    ema_decay: float
    rampup: float
    rampdown: float


def resolve_schedule(cfg: ScheduleConfig, step: int) -> ScheduleValues:
    """All scheduled values for ``step``"""
    rampup = rampup_sigmoid(step, cfg.rampup_steps)
    rampdown = rampdown_sigmoid(step, cfg.rampdown_start, cfg.total_steps) if cfg.rampdown_steps else 1.0
    if cfg.cosine_horizon is not None:
        lr = cosine_anneal(step, cfg.cosine_horizon, cfg.lr_max)
    else:
        lr = cfg.lr_max * rampdown
    if cfg.rampup_lr:
        lr *= rampup
    return ScheduleValues(
        lr=lr,
        beta1=rampdown * cfg.beta1 + (1.0 - rampdown) * BETA1_FLOOR,
        beta2=two_phase(step, cfg.phase_switch_step, cfg.beta2_before, cfg.beta2_after),
        ema_decay=two_phase(step, cfg.phase_switch_step, cfg.ema_before, cfg.ema_after),
        rampup=rampup,
        rampdown=rampdown,
    )
