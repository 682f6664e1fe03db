"""
Experiment runner, sweeps and metrics files
"""

from .data import ExperimentData, build_data, build_model_spec, data_seed, expected_labeled_count
from .metrics import (
    METRICS_COLUMNS,
    METRICS_SCHEMA_VERSION,
    MetricsRecord,
    read_metrics,
    records_frame,
    smooth_metrics,
    write_metrics,
)
from .runner import RunResult, default_run_dir, evaluate_run, run_experiment
from .sweep import SWEEPABLE_KEYS, plan_grid, run_grid, run_sweep

__all__ = [
    "ExperimentData",
    "build_data",
    "build_model_spec",
    "data_seed",
    "expected_labeled_count",
    "METRICS_COLUMNS",
    "METRICS_SCHEMA_VERSION",
    "MetricsRecord",
    "read_metrics",
    "records_frame",
    "smooth_metrics",
    "write_metrics",
    "RunResult",
    "default_run_dir",
    "evaluate_run",
    "run_experiment",
    "SWEEPABLE_KEYS",
    "plan_grid",
    "run_grid",
    "run_sweep",
]
