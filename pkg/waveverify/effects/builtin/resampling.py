"""
effects/builtin/resampling.py

Sample-rate attacks.

resample: down/up-sample to the target rate and back, so the clip keeps its
          length and rate (16 kHz target is a no-op).
speed:    plain resampling by 1/factor: tempo and pitch change together and
          the output holds exactly ⌈N / factor⌉ samples.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Mapping

import torch
import torch.nn.functional as F
import torchaudio.functional as AF

from ..base import BaseEffect, EffectContext, EffectId, ParamSpec


def fit_length(wave: torch.Tensor, length: int) -> torch.Tensor:
    """Trim or zero-pad the last dimension to exactly length samples."""
    current = wave.shape[-1]
    if current > length:
        return wave[..., :length]
    if current < length:
        return F.pad(wave, (0, length - current))
    return wave


class ResampleEffect(BaseEffect):
    name = EffectId.RESAMPLE.value
    param_specs = (ParamSpec("target_rate_hz", choices=(8000.0, 16000.0, 32000.0)),)

    def apply(self, wave: torch.Tensor, params: Mapping[str, float], ctx: EffectContext) -> torch.Tensor:
        target = int(params["target_rate_hz"])
        if target == ctx.sample_rate:
            return wave
        down = AF.resample(wave, orig_freq=ctx.sample_rate, new_freq=target)
        back = AF.resample(down, orig_freq=target, new_freq=ctx.sample_rate)
        return fit_length(back, wave.shape[-1])


class SpeedEffect(BaseEffect):
    name = EffectId.SPEED.value
    param_specs = (ParamSpec("speed_factor", 0.8, 1.25),)

    def output_length(self, length: int, params: Mapping[str, float], sample_rate: int) -> int:
        return max(1, math.ceil(round(length / params["speed_factor"], 6)))

    def apply(self, wave: torch.Tensor, params: Mapping[str, float], ctx: EffectContext) -> torch.Tensor:
        factor = params["speed_factor"]
        length = self.output_length(wave.shape[-1], params, ctx.sample_rate)
        ratio = Fraction(factor).limit_denominator(100)
        if ratio == 1:
            return fit_length(wave, length)
        # playing faster by p/q == resampling from p to q
        stretched = AF.resample(wave, orig_freq=ratio.numerator, new_freq=ratio.denominator)
        return fit_length(stretched, length)
