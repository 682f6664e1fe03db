"""
One optimization step for each training algorithm.

All four algorithms share the same student forward and classification cost;
they differ only in where the consistency target comes from:

- supervised: no target
- pi: a second noisy forward through the same (tracked) weights
- mean_teacher: a noisy forward through the EMA weights, held constant
- temporal_ensembling: the bias-corrected stored prediction per example
"""

from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Tuple

import numpy as np
import structlog

from ..config.experiment import ExperimentConfig
from ..data.augment import AugmentConfig, augment_batch
from ..data.sampler import Batch
from ..errors import ConfigError
from ..nn.forward import ForwardResult, NoiseConfig, forward, init_weights
from ..nn.spec import ModelSpec
from ..nn.weights import WeightSet
from ..objectives.costs import (
    ConsistencyConfig,
    CostBreakdown,
    check_finite,
    classification_cost,
    consistency_cost,
    coupling_cost,
)
from ..objectives.schedules import ScheduleConfig, ScheduleValues, resolve_schedule
from ..tensor.random import RandomSource
from ..tensor.tensor import Tape, Tensor, backward, stop_gradient
from .ema import EMAState, ema_update
from .optim import OptimizerState, adam_step
from .temporal import TemporalEnsembleStore

logger = structlog.get_logger()

ALGORITHMS = ("supervised", "pi", "mean_teacher", "temporal_ensembling")


def float_dtype(width: int) -> np.dtype:
    return np.dtype(np.float32 if width == 32 else np.float64)


def schedule_config(cfg: ExperimentConfig) -> ScheduleConfig:
    return ScheduleConfig(
        total_steps=cfg.total_steps,
        rampup_steps=cfg.rampup_steps,
        rampdown_steps=cfg.rampdown_steps,
        phase_switch_step=cfg.resolved_phase_switch,
        lr_max=cfg.lr,
        rampup_lr=cfg.rampup_lr,
        beta1=cfg.adam_beta1,
        beta2_before=cfg.adam_beta2_before,
        beta2_after=cfg.adam_beta2_after,
        ema_before=cfg.ema_decay_before,
        ema_after=cfg.ema_decay_after,
        cosine_horizon=cfg.cosine_horizon,
    )


def consistency_config(cfg: ExperimentConfig) -> ConsistencyConfig:
    return ConsistencyConfig(kind=cfg.consistency, max_weight=cfg.consistency_weight,
                             rampup_steps=cfg.rampup_steps, tau=cfg.tau)


def side_noise(cfg: ExperimentConfig, side: str) -> NoiseConfig:
    """Noise toggles for ``student`` or ``teacher``"""
    return NoiseConfig(
        augment=getattr(cfg, f"{side}_augment"),
        input_noise=None if getattr(cfg, f"{side}_input_noise") else 0.0,
        dropout=None if getattr(cfg, f"{side}_dropout") else 0.0,
    )


@dataclass
class TrainerState:
    algorithm: str
    spec: ModelSpec
    student: WeightSet
    ema: EMAState
    opt: OptimizerState
    src: RandomSource
    expected_labeled: float
    step: int = 0
    store: Optional[TemporalEnsembleStore] = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError([f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}"])
        if (self.algorithm == "temporal_ensembling") != (self.store is not None):
            raise ConfigError(["a temporal ensemble store is required by temporal_ensembling and only by it"])

    @property
    def teacher(self) -> WeightSet:
        return self.ema.weights


def init_trainer_state(spec: ModelSpec, cfg: ExperimentConfig, n_examples: int,
                       expected_labeled: Optional[float] = None,
                       calibration: Optional[np.ndarray] = None) -> TrainerState:
    """
    Fresh state: initialized student, teacher copied from it, zero moments.

    Args:
        spec: Model description
        cfg: Experiment configuration
        n_examples: Ids the temporal store must cover (primary plus extra pool)
        expected_labeled: Classification weight (default: labeled quota)
        calibration: Batch for data-dependent initialization
    """
    src = RandomSource(cfg.seed)
    dtype = float_dtype(cfg.float_width)
    student = init_weights(spec, src, calibration=calibration, dtype=dtype)
    store = None
    if cfg.algorithm == "temporal_ensembling":
        store = TemporalEnsembleStore(n_examples, spec.n_classes, decay=cfg.te_decay, dtype=dtype)
    return TrainerState(
        algorithm=cfg.algorithm,
        spec=spec,
        student=student,
        ema=EMAState.from_student(student, decay=cfg.ema_decay_before),
        opt=OptimizerState.for_weights(student, epsilon=cfg.adam_epsilon),
        src=src,
        expected_labeled=float(cfg.labeled_per_batch if expected_labeled is None else expected_labeled),
        store=store,
    )


@dataclass
class StepOutputs:
    total: Tensor
    breakdown: CostBreakdown
    student: ForwardResult
    schedule: ScheduleValues


def augmented_inputs(spec: ModelSpec, batch: Batch, cfg: ExperimentConfig,
                     step_src: RandomSource, algorithm: str) -> Tuple[np.ndarray, np.ndarray]:
    """Student and teacher views of the batch with independent augmentation draws"""
    if len(spec.input_shape) != 3:
        return batch.inputs, batch.inputs
    aug = AugmentConfig(translate_max=spec.augment.translate_max, flip=spec.augment.flip, border=cfg.border)
    student_inputs = augment_batch(batch.inputs, aug, step_src.child("student_augment")) if cfg.student_augment else batch.inputs
    if algorithm == "pi" and cfg.pi_shared_augmentation:
        return student_inputs, student_inputs
    teacher_inputs = augment_batch(batch.inputs, aug, step_src.child("teacher_augment")) if cfg.teacher_augment else batch.inputs
    return student_inputs, teacher_inputs


def _consistency_target(state: TrainerState, batch: Batch, cfg: ExperimentConfig, step_src: RandomSource,
                        tape: Tape, student_params: Mapping[str, Tensor],
                        teacher_params: Optional[Mapping[str, Tensor]],
                        teacher_inputs: np.ndarray) -> Tuple[Optional[Tensor], Optional[np.ndarray]]:
    noise = side_noise(cfg, "teacher")
    if state.algorithm == "pi":
        branch = forward(state.spec, state.student, teacher_inputs, noise, step_src.child("teacher"),
                         tape=tape, params=teacher_params or student_params, update_stats=False)
        return branch.probabilities, None
    if state.algorithm == "mean_teacher":
        branch = forward(state.spec, state.teacher, teacher_inputs, noise, step_src.child("teacher"),
                         tape=tape if teacher_params is not None else None, params=teacher_params,
                         update_stats=False)
        with tape:
            return stop_gradient(branch.probabilities), None
    if state.algorithm == "temporal_ensembling":
        targets, available = state.store.targets(batch.example_ids)
        if not available.any():
            return None, None
        return Tensor(targets, dtype=state.student.dtype), available.astype(np.float64)
    return None, None


def compute_costs(state: TrainerState, batch: Batch, cfg: ExperimentConfig, tape: Tape,
                  student_params: Mapping[str, Tensor],
                  teacher_params: Optional[Mapping[str, Tensor]] = None) -> StepOutputs:
    """
    Total cost of one step recorded on ``tape``.

    ``teacher_params`` lets callers register the teacher branch weights as
    separate leaves; by default the Π branch reuses the student leaves and the
    mean-teacher branch uses the EMA weights as constants.
    """
    values = resolve_schedule(schedule_config(cfg), state.step)
    step_src = state.src.child("step", state.step)
    student_inputs, teacher_inputs = augmented_inputs(state.spec, batch, cfg, step_src, state.algorithm)
    dtype = state.student.dtype

    student = forward(state.spec, state.student, student_inputs, side_noise(cfg, "student"),
                      step_src.child("student"), tape=tape, params=student_params, update_stats=True)
    dual = state.spec.head_count == 2

    with tape:
        class_cost, class_weight = classification_cost(
            student.probabilities, batch.labels, batch.labeled_mask, state.expected_labeled,
            require_labels=cfg.sampling == "quota" and cfg.labeled_per_batch > 0,
        )
    target, row_mask = (None, None)
    if state.algorithm != "supervised":
        target, row_mask = _consistency_target(state, batch, cfg, step_src, tape, student_params,
                                               teacher_params, teacher_inputs)

    with tape:
        if target is None:
            consistency = Tensor(0.0, dtype=dtype)
        else:
            prediction = student.head_probabilities[1] if dual else student.probabilities
            consistency = consistency_cost(consistency_config(cfg), prediction, target, row_mask)
        coupling = coupling_cost(student.logits[0], student.logits[1]) if dual else Tensor(0.0, dtype=dtype)
        consistency_weight = 0.0 if state.algorithm == "supervised" else cfg.consistency_weight * values.rampup
        coupling_weight = cfg.coupling_weight if dual else 0.0
        total = class_cost * class_weight + consistency * consistency_weight + coupling * coupling_weight

    check_finite("total cost", total)
    breakdown = CostBreakdown(
        classification=class_cost.item(),
        class_weight=class_weight,
        consistency_raw=consistency.item(),
        consistency_weight=consistency_weight,
        coupling=coupling.item(),
        coupling_weight=coupling_weight,
    )
    return StepOutputs(total=total, breakdown=breakdown, student=student, schedule=values)


def train_step(state: TrainerState, batch: Batch, cfg: ExperimentConfig) -> Tuple[TrainerState, CostBreakdown]:
    """
    Forward, cost, gradient, Adam update on the student, then the EMA update.

    Args:
        state: Trainer state (updated in place)
        batch: Minibatch from the configured sampler
        cfg: Experiment configuration

    Returns:
        (state, cost breakdown of this step)
    """
    tape = Tape()
    student_params = tape.watch(state.student.params)
    outputs = compute_costs(state, batch, cfg, tape, student_params)

    grads: Dict[str, Tensor] = backward(tape, outputs.total) if tape.is_live(outputs.total) else {}
    grad_arrays = {
        name: grads[name].data if name in grads else np.zeros_like(param)
        for name, param in state.student.params.items()
    }
    values = outputs.schedule
    adam_step(state.opt, state.student, grad_arrays, lr=values.lr, beta1=values.beta1, beta2=values.beta2)
    ema_update(state.ema, state.student, values.ema_decay)

    if state.store is not None:
        probabilities = outputs.student.probabilities.data
        segments = batch.epoch_segments()
        for index, rows in enumerate(segments):
            state.store.record(batch.example_ids[rows], probabilities[rows])
            if index < len(segments) - 1:
                state.store.commit()

    state.step += 1
    return state, outputs.breakdown
