"""
Experiment runner: one configuration, one seed, one self-contained run directory.

Run directory layout::

    config.cfg              fully resolved config (key=value)
    model.json              ModelSpec
    metrics.csv             one MetricsRecord per evaluation tick
    timings.csv             wall-clock seconds per evaluation tick
    checkpoints/latest.npz  last good trainer state
    summary.json            headline result
"""

import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd
import structlog

from ..config.experiment import ExperimentConfig, parse_config
from ..config.settings import settings
from ..errors import CheckpointError, NonFiniteError
from ..data.sampler import SamplerState, sample_batch
from ..nn.spec import ModelSpec, parameter_count
from ..objectives.schedules import resolve_schedule
from ..tensor.random import RandomSource
from ..trainers.checkpoint import load_checkpoint, save_checkpoint
from ..trainers.evaluate import EvalResult, evaluate
from ..trainers.step import TrainerState, init_trainer_state, schedule_config, train_step
from .data import ExperimentData, build_data, build_model_spec, expected_labeled_count
from .metrics import MetricsRecord, TIMING_COLUMNS, read_metrics, records_frame, smooth_metrics, write_metrics, write_timings

logger = structlog.get_logger()

CONFIG_FILE = "config.cfg"
MODEL_FILE = "model.json"
METRICS_FILE = "metrics.csv"
TIMINGS_FILE = "timings.csv"
SUMMARY_FILE = "summary.json"
CHECKPOINT_FILE = Path("checkpoints") / "latest.npz"

CALIBRATION_SIZE = 100


@dataclass
class RunResult:
    run_dir: Path
    summary: Dict[str, Any]

    @property
    def headline_error(self) -> float:
        return float(self.summary["headline_error"])


def default_run_dir(cfg: ExperimentConfig) -> Path:
    digest = hashlib.sha256(cfg.to_text().encode("utf-8")).hexdigest()[:8]
    return settings.run_root_path / f"{cfg.algorithm}_s{cfg.seed}_{digest}"


def calibration_batch(data: ExperimentData, seed: int, size: int = CALIBRATION_SIZE) -> np.ndarray:
    """Training examples used for data-dependent initialization"""
    pool = len(data.train)
    order = RandomSource(seed).child("calibration_batch").generator.permutation(pool)
    return data.train.examples[order[:min(size, pool)]]


def _sampler(cfg: ExperimentConfig, data: ExperimentData) -> SamplerState:
    return SamplerState(data.split, RandomSource(cfg.seed).child("sampler"), mode=cfg.sampling, reuse=cfg.reuse)


def _evaluation_tick(state: TrainerState, cfg: ExperimentConfig, data: ExperimentData,
                     breakdown, spec: ModelSpec) -> MetricsRecord:
    labeled = data.labeled_train
    student_test = evaluate(spec, state.student, data.test)
    teacher_test = evaluate(spec, state.teacher, data.test)
    if len(labeled):
        student_train = evaluate(spec, state.student, labeled)
        teacher_train = evaluate(spec, state.teacher, labeled)
    else:
        student_train = teacher_train = EvalResult(error_rate=float("nan"), mean_cost=float("nan"), examples=0)
    schedule = resolve_schedule(schedule_config(cfg), state.step - 1)
    return MetricsRecord.build(state.step, breakdown, schedule, student_train, student_test, teacher_train, teacher_test)


def _summary(cfg: ExperimentConfig, spec: ModelSpec, records: List[MetricsRecord], status: str,
             step: int, message: Optional[str] = None) -> Dict[str, Any]:
    summary: Dict[str, Any] = {
        "status": status,
        "algorithm": cfg.algorithm,
        "seed": cfg.seed,
        "step": step,
        "total_steps": cfg.total_steps,
        "eval_target": cfg.eval_target,
        "parameter_count": parameter_count(spec),
        "model_fingerprint": spec.fingerprint(),
    }
    if records:
        last = records[-1]
        smoothed = smooth_metrics(records_frame(records)).iloc[-1]
        target = cfg.eval_target
        summary.update({
            "headline_error": getattr(last, f"{target}_test_error"),
            "teacher_test_error": last.teacher_test_error,
            "student_test_error": last.student_test_error,
            "smoothed_teacher_test_error": float(smoothed["teacher_test_error"]),
            "smoothed_student_test_error": float(smoothed["student_test_error"]),
            "smoothed_classification_cost": float(smoothed["classification_cost"]),
        })
    else:
        summary["headline_error"] = None
    if message:
        summary["message"] = message
    return summary


def _write_summary(run_dir: Path, summary: Dict[str, Any]) -> None:
    with open(run_dir / SUMMARY_FILE, "w", encoding="utf-8") as handle:
        json.dump(summary, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _resume_records(run_dir: Path, step: int) -> List[MetricsRecord]:
    path = run_dir / METRICS_FILE
    if not path.exists():
        return []
    return [record for record in read_metrics(path) if record.step <= step]


def _resume_timings(run_dir: Path, step: int) -> List[Dict[str, float]]:
    path = run_dir / TIMINGS_FILE
    if not path.exists():
        return []
    df = pd.read_csv(path)
    return df[df["step"] <= step][list(TIMING_COLUMNS)].to_dict(orient="records")


def run_experiment(cfg: ExperimentConfig, run_dir: Optional[Union[str, Path]] = None,
                   resume: bool = False) -> RunResult:
    """
    Train ``cfg.total_steps`` steps and write the run directory.

    Args:
        cfg: Validated experiment configuration
        run_dir: Output directory (default: under the settings run root)
        resume: Continue from ``checkpoints/latest.npz`` in ``run_dir``

    Returns:
        RunResult with the run directory and the summary document

    Raises:
        NonFiniteError: If a cost becomes NaN/Inf; the last good checkpoint
            and a summary with status ``non_finite`` are left on disk
    """
    run_dir = Path(run_dir) if run_dir is not None else default_run_dir(cfg)
    run_dir.mkdir(parents=True, exist_ok=True)
    logger.info("Starting run", run_dir=str(run_dir), algorithm=cfg.algorithm, seed=cfg.seed,
                total_steps=cfg.total_steps, resume=resume)

    data = build_data(cfg)
    spec = build_model_spec(cfg, data.train.example_shape, data.train.n_classes)
    sampler = _sampler(cfg, data)
    checkpoint_path = run_dir / CHECKPOINT_FILE

    if resume:
        if not checkpoint_path.exists():
            raise CheckpointError(f"nothing to resume: {checkpoint_path} does not exist")
        state, extra = load_checkpoint(checkpoint_path, spec)
        if state.algorithm != cfg.algorithm:
            raise CheckpointError(f"checkpoint algorithm {state.algorithm} does not match config {cfg.algorithm}")
        sampler.restore(extra.get("sampler", {}))
        records = _resume_records(run_dir, state.step)
        timings = _resume_timings(run_dir, state.step)
    else:
        state = init_trainer_state(
            spec, cfg, data.n_ids,
            expected_labeled=expected_labeled_count(cfg, data.split),
            calibration=calibration_batch(data, cfg.seed),
        )
        records, timings = [], []

    with open(run_dir / CONFIG_FILE, "w", encoding="utf-8") as handle:
        handle.write(cfg.to_text())
    with open(run_dir / MODEL_FILE, "w", encoding="utf-8") as handle:
        json.dump(spec.to_dict(), handle, indent=2, sort_keys=True)
        handle.write("\n")

    def checkpoint() -> None:
        save_checkpoint(checkpoint_path, state, extra={"sampler": sampler.to_dict()})

    started = time.perf_counter()
    try:
        while state.step < cfg.total_steps:
            batch = sample_batch(sampler, cfg.labeled_per_batch, cfg.unlabeled_per_batch)
            state, breakdown = train_step(state, batch, cfg)

            if state.step % cfg.eval_every == 0 or state.step == cfg.total_steps:
                record = _evaluation_tick(state, cfg, data, breakdown, spec)
                records.append(record)
                timings.append({"step": state.step, "wall_time_s": round(time.perf_counter() - started, 3)})
                write_metrics(records, run_dir / METRICS_FILE)
                write_timings(timings, run_dir / TIMINGS_FILE)
                logger.info(
                    "Evaluation",
                    step=state.step,
                    total_cost=round(record.total_cost, 5),
                    classification_cost=round(record.classification_cost, 5),
                    student_test_error=record.student_test_error,
                    teacher_test_error=record.teacher_test_error,
                    lr=record.lr,
                    ema_decay=record.ema_decay,
                )

            if state.step % cfg.checkpoint_every == 0 or state.step == cfg.total_steps:
                checkpoint()
    except NonFiniteError as error:
        logger.error("Run aborted on non-finite value", step=state.step, error=str(error), run_dir=str(run_dir))
        _write_summary(run_dir, _summary(cfg, spec, records, "non_finite", state.step, message=str(error)))
        raise

    summary = _summary(cfg, spec, records, "completed", state.step)
    _write_summary(run_dir, summary)
    logger.info("Run finished", run_dir=str(run_dir), headline_error=summary["headline_error"],
                target=cfg.eval_target)
    return RunResult(run_dir=run_dir, summary=summary)


def evaluate_run(run_dir: Union[str, Path], checkpoint: Optional[Union[str, Path]] = None,
                 target: Optional[str] = None) -> Dict[str, Any]:
    """
    Re-evaluate a checkpoint of a finished or interrupted run on its test set.

    Args:
        run_dir: Run directory holding ``config.cfg``
        checkpoint: Checkpoint file (default: ``checkpoints/latest.npz``)
        target: ``teacher`` or ``student`` (default: the run's eval_target)

    Returns:
        Dictionary with step, target, error rate and mean cost
    """
    run_dir = Path(run_dir)
    cfg = parse_config(run_dir / CONFIG_FILE)
    target = target or cfg.eval_target
    if target not in ("teacher", "student"):
        raise ValueError(f"target must be teacher or student, got {target!r}")
    data = build_data(cfg)
    spec = build_model_spec(cfg, data.train.example_shape, data.train.n_classes)
    state, _ = load_checkpoint(Path(checkpoint) if checkpoint else run_dir / CHECKPOINT_FILE, spec)
    weights = state.teacher if target == "teacher" else state.student
    result = evaluate(spec, weights, data.test)
    logger.info("Checkpoint evaluated", run_dir=str(run_dir), step=state.step, target=target,
                error_rate=result.error_rate)
    return {
        "step": state.step,
        "target": target,
        "error_rate": result.error_rate,
        "mean_cost": result.mean_cost,
        "examples": result.examples,
    }
