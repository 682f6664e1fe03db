"""
Experiment configuration.

Configs are ``key=value`` text files (``#`` starts a comment). Command-line
``--key=value`` flags override file keys. Every violation found in one parse
is reported together in a single ConfigError.
"""

from pathlib import Path
from typing import Any, Dict, Iterable, List, Literal, Optional, Tuple, Union

import structlog
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..errors import ConfigError
from .settings import settings

logger = structlog.get_logger()

Algorithm = Literal["supervised", "pi", "mean_teacher", "temporal_ensembling"]

# Keys that set both phases of a two-phase value
SHORTHANDS: Dict[str, Tuple[str, str]] = {
    "ema_decay": ("ema_decay_before", "ema_decay_after"),
    "adam_beta2": ("adam_beta2_before", "adam_beta2_after"),
}

NONE_WORDS = ("", "none", "null")


class ExperimentConfig(BaseModel):
    """
    Every knob of one training run. Defaults follow the ConvNet training
    recipe (Adam 0.003/0.9/1e-8, batch of 1 labeled + 99 unlabeled, beta2 and
    EMA decay 0.99 during ramp-up then 0.999) at desk-scale step counts.
    """

    model_config = ConfigDict(extra="forbid", validate_assignment=False)

    # run
    algorithm: Algorithm = "mean_teacher"
    seed: int = Field(0, ge=0)
    total_steps: int = Field(5000, ge=1)
    eval_every: int = Field(100, ge=1)
    checkpoint_every: int = Field(1000, ge=1)
    eval_target: Literal["teacher", "student"] = "teacher"
    float_width: int = Field(default_factory=lambda: settings.default_float_width)

    # data
    dataset: Literal["two_moons", "glyphs", "idx"] = "two_moons"
    train_size: int = Field(1000, ge=2)
    test_size: int = Field(1000, ge=2)
    data_noise: float = Field(0.1, ge=0.0)
    glyph_side: int = Field(8, ge=8)
    idx_train_images: Optional[str] = None
    idx_train_labels: Optional[str] = None
    idx_test_images: Optional[str] = None
    idx_test_labels: Optional[str] = None
    normalization: Literal["none", "standardize", "zca"] = "standardize"
    zca_epsilon: float = Field(1e-5, gt=0.0)
    labels_per_class: Optional[int] = Field(3, ge=0)
    extra_unlabeled: int = Field(0, ge=0)
    streaming: bool = False
    holdout_fraction: float = Field(0.0, ge=0.0, lt=1.0)
    sampling: Literal["quota", "mixed"] = "quota"
    labeled_per_batch: int = Field(1, ge=0)
    unlabeled_per_batch: int = Field(99, ge=0)
    reuse: bool = True

    # model
    model: Literal["mlp", "convnet", "linear"] = "mlp"
    hidden: List[int] = Field(default_factory=lambda: [100, 100])
    width_scale: float = Field(1.0, gt=0.0)
    slope: float = Field(0.1, ge=0.0, lt=1.0)
    dual_head: bool = False
    input_noise: float = Field(0.15, ge=0.0)
    dropout: float = Field(0.5, ge=0.0, lt=1.0)
    translate_max: int = Field(2, ge=0)
    flip: bool = False
    border: Literal["zero", "reflect"] = "zero"

    # noise toggles per side
    student_augment: bool = True
    student_input_noise: bool = True
    student_dropout: bool = True
    teacher_augment: bool = True
    teacher_input_noise: bool = True
    teacher_dropout: bool = True
    pi_shared_augmentation: bool = False

    # costs
    consistency: Literal["mse", "kl", "c_tau"] = "mse"
    tau: float = Field(1.0, gt=0.0, le=1.0)
    consistency_weight: float = Field(100.0, ge=0.0)
    coupling_weight: float = Field(0.01, ge=0.0)

    # schedules
    rampup_steps: int = Field(1000, ge=0)
    rampdown_steps: int = Field(0, ge=0)
    phase_switch_step: Optional[int] = Field(None, ge=0)
    cosine_horizon: Optional[int] = Field(None, gt=0)
    rampup_lr: bool = True

    # optimizer and averaging
    lr: float = Field(0.003, gt=0.0)
    adam_beta1: float = Field(0.9, ge=0.0, lt=1.0)
    adam_beta2_before: float = Field(0.99, ge=0.0, lt=1.0)
    adam_beta2_after: float = Field(0.999, ge=0.0, lt=1.0)
    adam_epsilon: float = Field(1e-8, gt=0.0)
    ema_decay_before: float = Field(0.99, ge=0.0, le=1.0)
    ema_decay_after: float = Field(0.999, ge=0.0, le=1.0)
    te_decay: float = Field(0.6, ge=0.0, lt=1.0)

    @model_validator(mode="before")
    @classmethod
    def _expand_shorthands(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        data = dict(data)
        for key, targets in SHORTHANDS.items():
            if key in data:
                value = data.pop(key)
                for target in targets:
                    data.setdefault(target, value)
        return data

    @field_validator("hidden", mode="before")
    @classmethod
    def _parse_hidden(cls, value: Any) -> Any:
        if isinstance(value, str):
            return [int(part) for part in value.split(",") if part.strip()]
        return value

    @field_validator("labels_per_class", "phase_switch_step", "cosine_horizon", mode="before")
    @classmethod
    def _parse_optional_int(cls, value: Any) -> Any:
        if isinstance(value, str) and value.strip().lower() in NONE_WORDS + ("all",):
            return None
        return value

    @field_validator("idx_train_images", "idx_train_labels", "idx_test_images", "idx_test_labels", mode="before")
    @classmethod
    def _parse_optional_path(cls, value: Any) -> Any:
        if isinstance(value, str) and value.strip().lower() in NONE_WORDS:
            return None
        return value

    @field_validator("float_width")
    @classmethod
    def _check_float_width(cls, value: int) -> int:
        if value not in (32, 64):
            raise ValueError(f"float_width must be 32 or 64, got {value}")
        return value

    @model_validator(mode="after")
    def _check_combinations(self) -> "ExperimentConfig":
        violations = cross_field_violations(self)
        if violations:
            raise ValueError("\n".join(violations))
        return self

    # ------------------------------------------------------------------ views

    @property
    def is_image(self) -> bool:
        return self.dataset in ("glyphs", "idx")

    @property
    def batch_size(self) -> int:
        return self.labeled_per_batch + self.unlabeled_per_batch

    @property
    def resolved_phase_switch(self) -> int:
        return self.rampup_steps if self.phase_switch_step is None else self.phase_switch_step

    def to_text(self) -> str:
        """Fully resolved config in the key=value file format"""
        lines = []
        for key in type(self).model_fields:
            lines.append(f"{key}={format_value(getattr(self, key))}")
        return "\n".join(lines) + "\n"

    def replace(self, **changes: Any) -> "ExperimentConfig":
        data = self.model_dump()
        for key, targets in SHORTHANDS.items():
            if key in changes:
                for target in targets:
                    data.pop(target, None)
        data.update(changes)
        return build_config(data)


def format_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def cross_field_violations(cfg: ExperimentConfig) -> List[str]:
    violations = []
    if cfg.algorithm == "temporal_ensembling" and cfg.streaming and cfg.extra_unlabeled > 0:
        violations.append(
            "algorithm=temporal_ensembling cannot stream an extra unlabeled pool: its targets are "
            "per-example averages updated once per epoch, so every example needs a stored prediction "
            "and an epoch boundary; use mean_teacher or set streaming=false"
        )
    if cfg.batch_size == 0:
        violations.append("labeled_per_batch and unlabeled_per_batch are both zero")
    if cfg.sampling == "quota" and cfg.labeled_per_batch == 0:
        violations.append("quota sampling needs labeled_per_batch >= 1")
    if cfg.phase_switch_step is not None and cfg.phase_switch_step > cfg.total_steps:
        violations.append(f"phase_switch_step {cfg.phase_switch_step} exceeds total_steps {cfg.total_steps}")
    if cfg.rampdown_steps > cfg.total_steps:
        violations.append(f"rampdown_steps {cfg.rampdown_steps} exceeds total_steps {cfg.total_steps}")
    if cfg.model == "convnet" and not cfg.is_image:
        violations.append(f"model=convnet needs an image dataset, got dataset={cfg.dataset}")
    if cfg.model != "convnet" and cfg.is_image:
        violations.append(f"dataset={cfg.dataset} is image-shaped; use model=convnet")
    if cfg.dataset == "idx" and (cfg.idx_train_images is None or cfg.idx_test_images is None):
        violations.append("dataset=idx needs idx_train_images and idx_test_images")
    if cfg.dataset == "idx" and cfg.idx_train_labels is None:
        violations.append("dataset=idx needs idx_train_labels")
    if cfg.is_image and cfg.translate_max >= cfg.glyph_side and cfg.dataset == "glyphs":
        violations.append(f"translate_max {cfg.translate_max} must be smaller than glyph_side {cfg.glyph_side}")
    if cfg.dataset == "two_moons" and (cfg.train_size % 2 or cfg.test_size % 2):
        violations.append("two_moons needs even train_size and test_size")
    if cfg.dual_head and cfg.algorithm == "supervised":
        violations.append("dual_head needs a consistency algorithm, not supervised")
    if not cfg.hidden and cfg.model == "mlp":
        violations.append("model=mlp needs at least one hidden width")
    if any(width < 1 for width in cfg.hidden):
        violations.append(f"hidden widths must be >= 1, got {cfg.hidden}")
    return violations


def _violations_from(error: ValidationError) -> List[str]:
    violations = []
    for item in error.errors():
        location = ".".join(str(part) for part in item.get("loc", ()))
        if item.get("type") == "extra_forbidden":
            violations.append(f"{location}: unknown key")
            continue
        message = str(item.get("msg", "invalid value"))
        message = message.removeprefix("Value error, ")
        for line in message.split("\n"):
            violations.append(f"{location}: {line}" if location else line)
    return violations


def build_config(values: Dict[str, Any]) -> ExperimentConfig:
    """Validate a key/value mapping, raising ConfigError with every violation"""
    try:
        return ExperimentConfig(**values)
    except ValidationError as error:
        raise ConfigError(_violations_from(error)) from None


def read_config_text(text: str, source: str = "<config>") -> Dict[str, str]:
    values: Dict[str, str] = {}
    violations = []
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            violations.append(f"{source}:{number}: expected key=value, got {raw.strip()!r}")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            violations.append(f"{source}:{number}: empty key")
        elif key in values:
            violations.append(f"{source}:{number}: duplicate key {key!r}")
        else:
            values[key] = value
    if violations:
        raise ConfigError(violations)
    return values


def parse_overrides(flags: Iterable[str]) -> Dict[str, str]:
    """``--key=value`` flags (dashes inside the key map to underscores)"""
    values: Dict[str, str] = {}
    violations = []
    for flag in flags:
        if not flag.startswith("--") or "=" not in flag:
            violations.append(f"expected --key=value, got {flag!r}")
            continue
        key, value = flag[2:].split("=", 1)
        values[key.replace("-", "_")] = value
    if violations:
        raise ConfigError(violations)
    return values


def parse_config(path: Optional[Union[str, Path]] = None,
                 overrides: Optional[Union[Dict[str, Any], Iterable[str]]] = None) -> ExperimentConfig:
    """
    Build a validated ExperimentConfig.

    Args:
        path: key=value config file (None: defaults only)
        overrides: ``--key=value`` flags or a mapping; they win over file keys

    Returns:
        Validated configuration
    """
    values: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError([f"config file not found: {path}"])
        values.update(read_config_text(path.read_text(encoding="utf-8"), source=str(path)))
    if overrides:
        extra = dict(overrides) if isinstance(overrides, dict) else parse_overrides(overrides)
        for key, targets in SHORTHANDS.items():
            if key in extra:
                for target in targets:
                    values.pop(target, None)
        values.update(extra)
    config = build_config(values)
    logger.debug("Config parsed", source=str(path) if path else "defaults", keys=len(values))
    return config
