"""
effects/base.py

Abstract base class that every audio effect plugin implements, plus the
parameter-space description the scheduler discretizes.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import torch

from ..core.models import RandomSource
from ..errors import ParameterRangeError


class EffectId(str, Enum):
    IDENTITY       = "identity"
    HIGHPASS       = "highpass"
    LOWPASS        = "lowpass"
    BANDPASS       = "bandpass"
    RESAMPLE       = "resample"
    SPEED          = "speed"
    GAUSSIAN_NOISE = "gaussian_noise"
    PINK_NOISE     = "pink_noise"
    BABBLE_NOISE   = "babble_noise"
    QUANTIZE8      = "quantize8"
    EXTERNAL_CODEC = "external_codec"


EffectParams = dict[str, float]


# ---------------------------------------------------------------------------
# Parameter space
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class ParamSpec:
    """
    Legal range of one effect parameter.

    Continuous parameters use [low, high] and are split into n_bins uniform
    bins for the scheduler; discrete parameters list their choices and keep
    one bin per choice.
    """

    name: str
    low: float = 0.0
    high: float = 0.0
    choices: tuple[float, ...] = ()

    @property
    def discrete(self) -> bool:
        return bool(self.choices)

    @property
    def midpoint(self) -> float:
        """Middle choice or middle of the range; the default evaluation setting."""
        if self.discrete:
            return float(self.choices[len(self.choices) // 2])
        return (self.low + self.high) / 2

    def num_bins(self, n_bins: int) -> int:
        return len(self.choices) if self.discrete else n_bins

    def contains(self, value: float) -> bool:
        if self.discrete:
            return any(math.isclose(value, c) for c in self.choices)
        return self.low <= value <= self.high

    def sample_uniform(self, rng: RandomSource) -> float:
        if self.discrete:
            return float(self.choices[int(rng.integers(0, len(self.choices)))])
        return float(rng.uniform(self.low, self.high))

    def bin_index(self, value: float, n_bins: int) -> int:
        if self.discrete:
            return min(range(len(self.choices)), key=lambda i: abs(self.choices[i] - value))
        span = self.high - self.low
        idx = int((value - self.low) / span * n_bins) if span > 0 else 0
        return min(max(idx, 0), n_bins - 1)

    def sample_in_bin(self, index: int, n_bins: int, rng: RandomSource) -> float:
        if self.discrete:
            return float(self.choices[index])
        width = (self.high - self.low) / n_bins
        lo = self.low + index * width
        return float(rng.uniform(lo, lo + width))


@dataclass(slots=True)
class EffectContext:
    """Per-call inputs an effect may need besides the waveform."""

    sample_rate: int
    rng: RandomSource
    babble_pool: Sequence[torch.Tensor] = field(default_factory=tuple)
    """Speech clips used to synthesize multi-talker babble."""


# ---------------------------------------------------------------------------
# BaseEffect
# ---------------------------------------------------------------------------

class BaseEffect(ABC):
    """
    Contract that every effect plugin must satisfy.

    Class-level attributes:
        name: EffectId value, used in configs, CLI and reports
        param_specs: legal parameter ranges
        differentiable: False makes the registry apply the effect to a detached
            input and train through it with a straight-through gradient
        enabled: False hides the plugin from the registry

    apply() maps a waveform tensor (..., T) to (..., T'). Effects that change
    length report it through output_length(); the registry remaps the mask.
    """

    name: str = ""
    param_specs: tuple[ParamSpec, ...] = ()
    differentiable: bool = True
    enabled: bool = True

    @abstractmethod
    def apply(self, wave: torch.Tensor, params: Mapping[str, float], ctx: EffectContext) -> torch.Tensor:
        ...

    def available(self) -> bool:
        """False when the effect needs something this machine does not have."""
        return True

    def output_length(self, length: int, params: Mapping[str, float], sample_rate: int) -> int:
        return length

    def validate(self, params: Mapping[str, float]) -> EffectParams:
        """Return params as a plain dict; raise when a key is missing, unknown or out of range."""
        expected = {spec.name for spec in self.param_specs}
        unknown = set(params) - expected
        if unknown:
            raise ParameterRangeError(f"{self.name}: unknown parameter(s) {sorted(unknown)}")
        clean: EffectParams = {}
        for spec in self.param_specs:
            if spec.name not in params:
                raise ParameterRangeError(f"{self.name}: missing parameter {spec.name!r}")
            value = float(params[spec.name])
            if not spec.contains(value):
                legal = list(spec.choices) if spec.discrete else [spec.low, spec.high]
                raise ParameterRangeError(
                    f"{self.name}: {spec.name}={value} outside legal range {legal}"
                )
            clean[spec.name] = value
        return clean

    def sample_uniform(self, rng: RandomSource) -> EffectParams:
        return {spec.name: spec.sample_uniform(rng) for spec in self.param_specs}

    def __repr__(self) -> str:
        return f"<Effect:{self.name} enabled={self.enabled}>"


def straight_through(wave: torch.Tensor, processed: torch.Tensor) -> torch.Tensor:
    """Forward value of processed, gradient of identity."""
    return wave + (processed - wave).detach()
