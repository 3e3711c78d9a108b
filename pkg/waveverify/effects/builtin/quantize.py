"""
effects/builtin/quantize.py

8-bit amplitude quantization, trained with a straight-through gradient.
"""

from __future__ import annotations

from typing import Mapping

import torch

from ..base import BaseEffect, EffectContext, EffectId

_LEVELS = 128.0


def quantize8(wave: torch.Tensor) -> torch.Tensor:
    return torch.clamp(torch.round(wave * _LEVELS), -_LEVELS, _LEVELS - 1) / _LEVELS


class Quantize8Effect(BaseEffect):
    name = EffectId.QUANTIZE8.value
    differentiable = False

    def apply(self, wave: torch.Tensor, params: Mapping[str, float], ctx: EffectContext) -> torch.Tensor:
        return quantize8(wave)
