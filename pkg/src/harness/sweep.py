"""
Grid sweeps over sweepable config keys.

Runs execute in a thread pool; every run owns its state, tape and RNG streams.
Result rows are merged in (value indices, seed) order regardless of completion
order.
"""

import itertools
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd
import structlog

from ..config.experiment import ExperimentConfig, format_value
from ..config.settings import settings
from ..errors import ConfigError, EngineError
from .runner import run_experiment

logger = structlog.get_logger()

SWEEPABLE_KEYS = frozenset({
    "algorithm",
    "labels_per_class",
    "extra_unlabeled",
    "consistency",
    "tau",
    "consistency_weight",
    "coupling_weight",
    "dual_head",
    "ema_decay",
    "ema_decay_before",
    "ema_decay_after",
    "adam_beta2",
    "lr",
    "rampup_steps",
    "te_decay",
    "input_noise",
    "dropout",
    "translate_max",
    "student_augment",
    "student_input_noise",
    "student_dropout",
    "teacher_augment",
    "teacher_input_noise",
    "teacher_dropout",
    "pi_shared_augmentation",
    "width_scale",
})

SWEEP_FILE = "sweep.csv"
MEANS_FILE = "sweep_means.csv"
ERROR_COLUMNS = ["headline_error", "teacher_test_error", "student_test_error"]


@dataclass(frozen=True)
class _Cell:
    index: Tuple[int, ...]
    values: Dict[str, Any]
    seed: int
    seed_index: int
    config: ExperimentConfig
    run_dir: Path


def _cell_name(values: Dict[str, Any], seed: int) -> str:
    parts = [f"{key}={format_value(value)}" for key, value in values.items()]
    return "__".join(parts) + f"_seed{seed}"


def plan_grid(base: ExperimentConfig, axes: Dict[str, Sequence[Any]], seeds: Sequence[int],
              out_dir: Path) -> List[_Cell]:
    """
    Validate every cell's config before anything runs.

    Raises:
        ConfigError: Listing every non-sweepable key, empty axis and invalid cell
    """
    violations = []
    for key, values in axes.items():
        if key not in SWEEPABLE_KEYS:
            violations.append(f"{key}: not a sweepable key (sweepable: {', '.join(sorted(SWEEPABLE_KEYS))})")
        elif not values:
            violations.append(f"{key}: sweep axis has no values")
    if not axes:
        violations.append("sweep needs at least one axis")
    if not seeds:
        violations.append("sweep needs at least one seed")
    if violations:
        raise ConfigError(violations)

    keys = list(axes)
    cells = []
    for index in itertools.product(*(range(len(axes[key])) for key in keys)):
        values = {key: axes[key][i] for key, i in zip(keys, index)}
        for seed_index, seed in enumerate(seeds):
            try:
                config = base.replace(**values, seed=seed)
            except ConfigError as error:
                violations.extend(f"{_cell_name(values, seed)}: {v}" for v in error.violations)
                continue
            cells.append(_Cell(index, values, seed, seed_index, config, out_dir / _cell_name(values, seed)))
    if violations:
        raise ConfigError(violations)
    return cells


def _run_cell(cell: _Cell) -> Dict[str, Any]:
    row: Dict[str, Any] = {key: format_value(value) for key, value in cell.values.items()}
    row["seed"] = cell.seed
    try:
        result = run_experiment(cell.config, run_dir=cell.run_dir)
        row["status"] = result.summary["status"]
        for column in ERROR_COLUMNS:
            row[column] = result.summary.get(column)
    except EngineError as error:
        logger.error("Sweep run failed", run_dir=str(cell.run_dir), category=error.category, error=str(error))
        row["status"] = error.category
        for column in ERROR_COLUMNS:
            row[column] = float("nan")
    row["run_dir"] = str(cell.run_dir)
    return row


def run_grid(base: ExperimentConfig, axes: Dict[str, Sequence[Any]], seeds: Sequence[int],
             out_dir: Optional[Union[str, Path]] = None, workers: Optional[int] = None) -> pd.DataFrame:
    """
    Run every combination of axis values for every seed.

    Args:
        base: Configuration shared by all runs
        axes: Mapping of sweepable key to the values to try
        seeds: Seeds run for every combination
        out_dir: Sweep directory (default: ``<run root>/sweep_<keys>``)
        workers: Parallel run slots (default: settings.sweep_workers)

    Returns:
        One row per (combination, seed); also written to ``sweep.csv`` with the
        per-combination means in ``sweep_means.csv``
    """
    out_dir = Path(out_dir) if out_dir is not None else settings.run_root_path / ("sweep_" + "_".join(axes))
    cells = plan_grid(base, axes, list(seeds), out_dir)
    workers = max(1, workers or settings.sweep_workers)
    logger.info("Starting sweep", axes=list(axes), runs=len(cells), workers=workers, out_dir=str(out_dir))

    rows: Dict[Tuple[Tuple[int, ...], int], Dict[str, Any]] = {}
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = {executor.submit(_run_cell, cell): cell for cell in cells}
        for future in as_completed(futures):
            cell = futures[future]
            rows[(cell.index, cell.seed_index)] = future.result()
            logger.info("Sweep run done", run_dir=str(cell.run_dir), done=len(rows), total=len(cells))

    keys = list(axes)
    ordered = [rows[key] for key in sorted(rows)]
    df = pd.DataFrame(ordered, columns=keys + ["seed", "status"] + ERROR_COLUMNS + ["run_dir"])
    means = (
        df.groupby(keys, sort=False)[ERROR_COLUMNS]
        .agg(["mean", "std"])
    )
    means.columns = [f"{column}_{stat}" for column, stat in means.columns]
    means = means.reset_index()
    means.insert(len(keys), "runs", df.groupby(keys, sort=False).size().to_numpy())

    out_dir.mkdir(parents=True, exist_ok=True)
    df.to_csv(out_dir / SWEEP_FILE, index=False)
    means.to_csv(out_dir / MEANS_FILE, index=False)
    logger.info("Sweep finished", out_dir=str(out_dir), rows=len(df))
    return df


def run_sweep(base: ExperimentConfig, axis: str, values: Sequence[Any], seeds: Sequence[int],
              out_dir: Optional[Union[str, Path]] = None, workers: Optional[int] = None) -> pd.DataFrame:
    """One-axis sweep; see run_grid"""
    return run_grid(base, {axis: list(values)}, seeds, out_dir=out_dir, workers=workers)
