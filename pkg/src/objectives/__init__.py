"""
Cost functions and scalar schedules
"""

from .costs import (
    CONSISTENCY_KINDS,
    ConsistencyConfig,
    CostBreakdown,
    classification_cost,
    consistency_c_tau,
    consistency_cost,
    consistency_kl,
    consistency_mse,
    coupling_cost,
)
from .schedules import (
    ScheduleConfig,
    ScheduleValues,
    cosine_anneal,
    rampdown_sigmoid,
    rampup_sigmoid,
    resolve_schedule,
    two_phase,
)

__all__ = [
    "CONSISTENCY_KINDS",
    "ConsistencyConfig",
    "CostBreakdown",
    "classification_cost",
    "consistency_c_tau",
    "consistency_cost",
    "consistency_kl",
    "consistency_mse",
    "coupling_cost",
    "ScheduleConfig",
    "ScheduleValues",
    "cosine_anneal",
    "rampdown_sigmoid",
    "rampup_sigmoid",
    "resolve_schedule",
    "two_phase",
]
