"""
Metrics records and their CSV files.

``metrics.csv`` has a frozen column list (METRICS_COLUMNS, version
METRICS_SCHEMA_VERSION) and holds only values that are a function of the
config and seed. Wall-clock time goes to ``timings.csv``.
"""

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import pandas as pd
import structlog

from ..objectives.costs import CostBreakdown
from ..objectives.schedules import ScheduleValues
from ..trainers.evaluate import EvalResult

logger = structlog.get_logger()

METRICS_SCHEMA_VERSION = 1

METRICS_COLUMNS = (
    "step",
    "classification_cost",
    "class_weight",
    "consistency_cost_raw",
    "consistency_weight",
    "coupling_cost",
    "coupling_weight",
    "total_cost",
    "student_train_error",
    "student_test_error",
    "teacher_train_error",
    "teacher_test_error",
    "student_test_cost",
    "teacher_test_cost",
    "lr",
    "ema_decay",
    "beta1",
    "beta2",
)

TIMING_COLUMNS = ("step", "wall_time_s")

SMOOTHING_WINDOW = 10


@dataclass(frozen=True)
class MetricsRecord:
    step: int
    classification_cost: float
    class_weight: float
    consistency_cost_raw: float
    consistency_weight: float
    coupling_cost: float
    coupling_weight: float
    total_cost: float
    student_train_error: float
    student_test_error: float
    teacher_train_error: float
    teacher_test_error: float
    student_test_cost: float
    teacher_test_cost: float
    lr: float
    ema_decay: float
    beta1: float
    beta2: float

    @classmethod
    def build(cls, step: int, breakdown: CostBreakdown, schedule: ScheduleValues,
              student_train: EvalResult, student_test: EvalResult,
              teacher_train: EvalResult, teacher_test: EvalResult) -> "MetricsRecord":
        return cls(
            step=step,
            classification_cost=breakdown.classification,
            class_weight=breakdown.class_weight,
            consistency_cost_raw=breakdown.consistency_raw,
            consistency_weight=breakdown.consistency_weight,
            coupling_cost=breakdown.coupling,
            coupling_weight=breakdown.coupling_weight,
            total_cost=breakdown.total,
            student_train_error=student_train.error_rate,
            student_test_error=student_test.error_rate,
            teacher_train_error=teacher_train.error_rate,
            teacher_test_error=teacher_test.error_rate,
            student_test_cost=student_test.mean_cost,
            teacher_test_cost=teacher_test.mean_cost,
            lr=schedule.lr,
            ema_decay=schedule.ema_decay,
            beta1=schedule.beta1,
            beta2=schedule.beta2,
        )

    def to_row(self) -> Dict[str, Any]:
        return asdict(self)


def records_frame(records: List[MetricsRecord]) -> pd.DataFrame:
    """Records as a DataFrame with the frozen column order"""
    return pd.DataFrame([record.to_row() for record in records], columns=list(METRICS_COLUMNS))


def write_metrics(records: List[MetricsRecord], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # repr-exact floats keep repeated runs byte-identical
    records_frame(records).to_csv(path, index=False, float_format="%.17g")
    return path


def read_metrics(path: Union[str, Path]) -> List[MetricsRecord]:
    """
    Load records back from a metrics CSV.

    Raises:
        ValueError: If the column list differs from METRICS_COLUMNS
    """
    df = pd.read_csv(path, float_precision="round_trip")
    if tuple(df.columns) != METRICS_COLUMNS:
        raise ValueError(f"{path}: metrics columns {list(df.columns)} do not match schema v{METRICS_SCHEMA_VERSION}")
    records = []
    for row in df.to_dict(orient="records"):
        row["step"] = int(row["step"])
        records.append(MetricsRecord(**{key: row[key] for key in METRICS_COLUMNS}))
    return records


def write_timings(timings: List[Dict[str, float]], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(timings, columns=list(TIMING_COLUMNS)).to_csv(path, index=False)
    return path


def smooth_metrics(df: pd.DataFrame, window: int = SMOOTHING_WINDOW,
                   columns: Optional[List[str]] = None) -> pd.DataFrame:
    """
    Trailing-window mean over records, for curve reports.

    Args:
        df: Raw metrics frame
        window: Number of records in the trailing window
        columns: Columns to smooth (default: every column except ``step``)

    Returns:
        A new frame; ``step`` is left untouched
    """
    if window < 1:
        raise ValueError(f"smoothing window must be >= 1, got {window}")
    smoothed = df.copy()
    targets = columns or [column for column in df.columns if column != "step"]
    smoothed[targets] = df[targets].rolling(window=window, min_periods=1).mean()
    return smoothed
