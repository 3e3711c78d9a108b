"""
effects/builtin/identity.py

No-op effect. Used as the clean row in evaluation and as a scheduler arm.
"""

from __future__ import annotations

from typing import Mapping

import torch

from ..base import BaseEffect, EffectContext, EffectId


class IdentityEffect(BaseEffect):
    name = EffectId.IDENTITY.value

    def apply(self, wave: torch.Tensor, params: Mapping[str, float], ctx: EffectContext) -> torch.Tensor:
        return wave
