"""
Checkpoint files.

A checkpoint is a numpy ``.npz`` archive. ``meta`` holds a JSON document
(format version, step, algorithm, spec fingerprint, optimizer scalars, sampler
cursors); every other entry is an array keyed ``<group>/<name>`` with groups
``student``, ``student_buffer``, ``teacher``, ``teacher_buffer``, ``adam_m``,
``adam_v`` and ``store``.
"""

import json
import os
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import structlog

from ..errors import CheckpointError
from ..nn.spec import ModelSpec
from ..nn.weights import WeightSet
from ..tensor.random import RandomSource
from .ema import EMAState
from .optim import OptimizerState
from .step import TrainerState
from .temporal import TemporalEnsembleStore

logger = structlog.get_logger()

FORMAT_VERSION = 1


def _group(arrays: Dict[str, np.ndarray], prefix: str) -> Dict[str, np.ndarray]:
    start = len(prefix) + 1
    return {key[start:]: np.array(value) for key, value in arrays.items() if key.startswith(prefix + "/")}


def save_checkpoint(path: Union[str, Path], state: TrainerState,
                    extra: Optional[Dict[str, Any]] = None) -> Path:
    """
    Write ``state`` atomically (temporary file, then rename).

    Args:
        path: Destination ``.npz`` file
        state: Trainer state to persist
        extra: JSON-serializable data stored in the meta document (sampler cursors, seed)

    Returns:
        The written path
    """
    path = Path(path)
    meta = {
        "format_version": FORMAT_VERSION,
        "algorithm": state.algorithm,
        "step": state.step,
        "fingerprint": state.student.fingerprint,
        "dtype": str(state.student.dtype),
        "seed": state.src.seed,
        "expected_labeled": state.expected_labeled,
        "adam": {
            "step": state.opt.step,
            "beta1_power": state.opt.beta1_power,
            "beta2_power": state.opt.beta2_power,
            "epsilon": state.opt.epsilon,
        },
        "ema": {"decay": state.ema.decay, "updates": state.ema.updates},
        "store_decay": state.store.decay if state.store is not None else None,
        "extra": extra or {},
    }
    arrays: Dict[str, np.ndarray] = {"meta": np.array(json.dumps(meta, sort_keys=True))}
    groups = {
        "student": state.student.params,
        "student_buffer": state.student.buffers,
        "teacher": state.teacher.params,
        "teacher_buffer": state.teacher.buffers,
        "adam_m": state.opt.m,
        "adam_v": state.opt.v,
    }
    if state.store is not None:
        groups["store"] = state.store.to_arrays()
    for group, values in groups.items():
        for name, value in values.items():
            arrays[f"{group}/{name}"] = np.asarray(value)

    path.parent.mkdir(parents=True, exist_ok=True)
    temporary = path.with_name(path.name + ".tmp")
    try:
        with open(temporary, "wb") as handle:
            np.savez(handle, **arrays)
        os.replace(temporary, path)
    except OSError as error:
        logger.error("Checkpoint write failed", path=str(path), error=str(error))
        raise CheckpointError(f"could not write checkpoint {path}: {error}") from error
    logger.info("Checkpoint written", path=str(path), step=state.step)
    return path


def read_checkpoint_meta(path: Union[str, Path]) -> Dict[str, Any]:
    arrays = _load_arrays(path)
    return _meta(arrays, path)


def _load_arrays(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as archive:
            return {key: archive[key] for key in archive.files}
    except (OSError, ValueError) as error:
        raise CheckpointError(f"unreadable checkpoint {path}: {error}") from error


def _meta(arrays: Dict[str, np.ndarray], path: Union[str, Path]) -> Dict[str, Any]:
    if "meta" not in arrays:
        raise CheckpointError(f"{path}: missing meta document")
    meta = json.loads(str(arrays["meta"]))
    if meta.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {meta.get('format_version')}")
    return meta


def load_checkpoint(path: Union[str, Path], spec: ModelSpec) -> Tuple[TrainerState, Dict[str, Any]]:
    """
    Restore a TrainerState saved for ``spec``.

    Returns:
        (state, extra) where ``extra`` is the dictionary passed to save_checkpoint
    """
    arrays = _load_arrays(path)
    meta = _meta(arrays, path)
    if meta["fingerprint"] != spec.fingerprint():
        raise CheckpointError(
            f"{path}: checkpoint was written for model {meta['fingerprint']}, not {spec.fingerprint()}"
        )
    fingerprint = meta["fingerprint"]
    student = WeightSet(_group(arrays, "student"), _group(arrays, "student_buffer"), fingerprint)
    teacher = WeightSet(_group(arrays, "teacher"), _group(arrays, "teacher_buffer"), fingerprint)
    try:
        student.check_against(spec)
        teacher.check_against(spec)
    except ValueError as error:
        raise CheckpointError(f"{path}: {error}") from error

    adam = meta["adam"]
    opt = OptimizerState(
        m=_group(arrays, "adam_m"),
        v=_group(arrays, "adam_v"),
        beta1_power=float(adam["beta1_power"]),
        beta2_power=float(adam["beta2_power"]),
        step=int(adam["step"]),
        epsilon=float(adam["epsilon"]),
    )
    store = None
    if meta["algorithm"] == "temporal_ensembling":
        store = TemporalEnsembleStore.from_arrays(_group(arrays, "store"), decay=float(meta["store_decay"]))
    state = TrainerState(
        algorithm=meta["algorithm"],
        spec=spec,
        student=student,
        ema=EMAState(weights=teacher, decay=float(meta["ema"]["decay"]), updates=int(meta["ema"]["updates"])),
        opt=opt,
        src=RandomSource(int(meta["seed"])),
        expected_labeled=float(meta["expected_labeled"]),
        step=int(meta["step"]),
        store=store,
    )
    logger.info("Checkpoint loaded", path=str(path), step=state.step)
    return state, meta.get("extra", {})
