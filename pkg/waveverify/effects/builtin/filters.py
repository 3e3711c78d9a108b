"""
effects/builtin/filters.py

Highpass / lowpass / bandpass attacks.

Each filter is a 4th-order Butterworth response built as two cascaded RBJ
biquad sections (Q = 0.5412 and 1.3066) run through torchaudio's
differentiable lfilter. Bandpass is a highpass followed by a lowpass.

Cutoffs at or above Nyquist are capped to 0.95·Nyquist (lowpass can be
drawn up to 16 kHz while the working rate is 16 kHz).
"""

from __future__ import annotations

import logging
import math
from typing import Mapping

import torch
import torchaudio.functional as AF

from ..base import BaseEffect, EffectContext, EffectId, ParamSpec

logger = logging.getLogger(__name__)

_BUTTERWORTH4_Q = (0.5411961, 1.3065630)
_NYQUIST_MARGIN = 0.95
_capped_warned: set[tuple[str, int]] = set()


def _cap_cutoff(effect: str, cutoff: float, sample_rate: int) -> float:
    limit = _NYQUIST_MARGIN * sample_rate / 2
    if cutoff <= limit:
        return cutoff
    key = (effect, sample_rate)
    if key not in _capped_warned:
        _capped_warned.add(key)
        logger.warning(
            "%s cutoff %.0f Hz exceeds Nyquist at %d Hz, capping to %.0f Hz",
            effect, cutoff, sample_rate, limit,
        )
    else:
        logger.debug("%s cutoff %.0f Hz capped to %.0f Hz", effect, cutoff, limit)
    return limit


def _biquad(wave: torch.Tensor, sample_rate: int, cutoff: float, q: float, kind: str) -> torch.Tensor:
    w0 = 2 * math.pi * cutoff / sample_rate
    alpha = math.sin(w0) / (2 * q)
    cos_w0 = math.cos(w0)
    if kind == "highpass":
        b = [(1 + cos_w0) / 2, -1 - cos_w0, (1 + cos_w0) / 2]
    else:
        b = [(1 - cos_w0) / 2, 1 - cos_w0, (1 - cos_w0) / 2]
    a = [1 + alpha, -2 * cos_w0, 1 - alpha]
    a_coeffs = torch.tensor(a, dtype=wave.dtype, device=wave.device)
    b_coeffs = torch.tensor(b, dtype=wave.dtype, device=wave.device)
    return AF.lfilter(wave, a_coeffs, b_coeffs, clamp=False)


def butterworth4(wave: torch.Tensor, sample_rate: int, cutoff: float, kind: str) -> torch.Tensor:
    """4th-order Butterworth highpass or lowpass over the last dimension."""
    out = wave
    for q in _BUTTERWORTH4_Q:
        out = _biquad(out, sample_rate, cutoff, q, kind)
    return out


class HighpassEffect(BaseEffect):
    name = EffectId.HIGHPASS.value
    param_specs = (ParamSpec("cutoff_hz", 100.0, 3000.0),)

    def apply(self, wave: torch.Tensor, params: Mapping[str, float], ctx: EffectContext) -> torch.Tensor:
        cutoff = _cap_cutoff(self.name, params["cutoff_hz"], ctx.sample_rate)
        return butterworth4(wave, ctx.sample_rate, cutoff, "highpass")


class LowpassEffect(BaseEffect):
    name = EffectId.LOWPASS.value
    param_specs = (ParamSpec("cutoff_hz", 2000.0, 16000.0),)

    def apply(self, wave: torch.Tensor, params: Mapping[str, float], ctx: EffectContext) -> torch.Tensor:
        cutoff = _cap_cutoff(self.name, params["cutoff_hz"], ctx.sample_rate)
        return butterworth4(wave, ctx.sample_rate, cutoff, "lowpass")


class BandpassEffect(BaseEffect):
    """Passband edges drawn within ±20% of the 300 Hz / 4 kHz anchors."""

    name = EffectId.BANDPASS.value
    param_specs = (
        ParamSpec("low_hz", 240.0, 360.0),
        ParamSpec("high_hz", 3200.0, 4800.0),
    )

    def apply(self, wave: torch.Tensor, params: Mapping[str, float], ctx: EffectContext) -> torch.Tensor:
        low = _cap_cutoff(self.name, params["low_hz"], ctx.sample_rate)
        high = _cap_cutoff(self.name, params["high_hz"], ctx.sample_rate)
        out = butterworth4(wave, ctx.sample_rate, low, "highpass")
        return butterworth4(out, ctx.sample_rate, high, "lowpass")
