"""
scheduler/models.py

Data model for the dynamic effect scheduler.

SchedulerState is treated as a value: every scheduler operation returns a
new state and leaves its input untouched. It serializes to plain JSON
(to_dict / from_dict) for checkpoints and the scheduler-report command.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field
from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..errors import ParameterRangeError


class Phase(str, Enum):
    EXPLORATION  = "exploration"
    EXPLOITATION = "exploitation"


class SchedulerConfig(BaseModel):
    """Scheduler hyperparameters; defaults follow the training recipe."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    temperature_initial: float = Field(1.0, gt=0)
    temperature_final: float = Field(0.7, gt=0)
    w1: float = 0.8                                  # BER weight
    w2: float = 0.2                                  # (1 - MIoU) weight
    ema_beta: float = Field(0.9, gt=0, lt=1)
    laplace_alpha: float = Field(1.0, gt=0)
    laplace_beta: float = Field(1.0, gt=0)
    n_bins: int = Field(8, ge=1)
    exploit_start: float = Field(0.5, ge=0, le=1)    # fraction of total iterations
    anneal_fraction: float = Field(0.1, ge=0, le=1)  # T ramp length after the switch


@dataclass(frozen=True, slots=True)
class EffectFeedback:
    """Per-step metrics observed for one applied effect."""

    effect: str
    ber: float
    miou: float

    def __post_init__(self) -> None:
        for label, value in (("ber", self.ber), ("miou", self.miou)):
            if not 0.0 <= value <= 1.0:
                raise ParameterRangeError(f"feedback {label}={value} for {self.effect!r} outside [0, 1]")


@dataclass
class SchedulerState:
    effects: list[str]
    probs: dict[str, float]
    ber_ema: dict[str, float]
    miou_ema: dict[str, float]
    temperature: float
    w1: float
    w2: float
    ema_beta: float
    laplace_alpha: float = 1.0
    laplace_beta: float = 1.0
    n_bins: int = 8
    param_bins: dict[str, dict[str, list[list[int]]]] = field(default_factory=dict)
    """effect → parameter → per-bin [success_count, total_count]."""
    phase: Phase = Phase.EXPLORATION

    def copy(self) -> "SchedulerState":
        return copy.deepcopy(self)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["phase"] = self.phase.value
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "SchedulerState":
        data = copy.deepcopy(data)
        data["phase"] = Phase(data.get("phase", Phase.EXPLORATION.value))
        return cls(**data)
