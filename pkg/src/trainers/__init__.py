"""
Training algorithms, optimizer, weight averaging, evaluation and checkpoints
"""

from .optim import OptimizerState, adam_step
from .ema import EMAState, ema_update
from .temporal import TemporalEnsembleStore, temporal_target
from .step import (
    ALGORITHMS,
    StepOutputs,
    TrainerState,
    compute_costs,
    consistency_config,
    float_dtype,
    init_trainer_state,
    schedule_config,
    side_noise,
    train_step,
)
from .evaluate import EvalResult, evaluate, predict_probabilities
from .checkpoint import FORMAT_VERSION, load_checkpoint, read_checkpoint_meta, save_checkpoint

__all__ = [
    "OptimizerState",
    "adam_step",
    "EMAState",
    "ema_update",
    "TemporalEnsembleStore",
    "temporal_target",
    "ALGORITHMS",
    "StepOutputs",
    "TrainerState",
    "compute_costs",
    "consistency_config",
    "float_dtype",
    "init_trainer_state",
    "schedule_config",
    "side_noise",
    "train_step",
    "EvalResult",
    "evaluate",
    "predict_probabilities",
    "FORMAT_VERSION",
    "load_checkpoint",
    "read_checkpoint_meta",
    "save_checkpoint",
]
