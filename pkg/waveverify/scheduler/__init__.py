"""
scheduler/__init__.py

Public API for the dynamic effect scheduler.
"""

from .models import EffectFeedback, Phase, SchedulerConfig, SchedulerState
from .scheduler import (
    advance_schedule,
    init_scheduler,
    load_scheduler_state,
    param_posterior,
    record_param_outcome,
    sample_effects,
    save_scheduler_state,
    scheduler_report,
    smoothed_success_rate,
    update_scheduler,
)

__all__ = [
    "EffectFeedback",
    "Phase",
    "SchedulerConfig",
    "SchedulerState",
    "advance_schedule",
    "init_scheduler",
    "load_scheduler_state",
    "param_posterior",
    "record_param_outcome",
    "sample_effects",
    "save_scheduler_state",
    "scheduler_report",
    "smoothed_success_rate",
    "update_scheduler",
]
