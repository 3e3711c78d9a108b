"""
effects/builtin/noise.py

Additive noise attacks at a target SNR in [10, 30] dB.

gaussian_noise: white noise
pink_noise:     white noise shaped by 1/√f in the frequency domain
babble_noise:   sum of BABBLE_TALKERS randomly shifted speech clips from the
                training pool; falls back to shifted copies of the input when
                no pool is available

The noise scale is computed per row from the (detached) signal power, so the
gradient with respect to the input is identity.
"""

from __future__ import annotations

import logging
from typing import Mapping

import torch

from ...config import settings
from ..base import BaseEffect, EffectContext, EffectId, ParamSpec

logger = logging.getLogger(__name__)

_SNR = ParamSpec("snr_db", 10.0, 30.0)
_EPS = 1e-12


def add_at_snr(wave: torch.Tensor, noise: torch.Tensor, snr_db: float) -> torch.Tensor:
    """wave + noise rescaled so that power(wave) / power(noise) = 10^(snr/10)."""
    signal_power = wave.detach().pow(2).mean(dim=-1, keepdim=True)
    noise_power = noise.pow(2).mean(dim=-1, keepdim=True).clamp_min(_EPS)
    scale = torch.sqrt(signal_power / (noise_power * 10.0 ** (snr_db / 10.0)))
    return wave + noise * scale


def pink_noise(shape: torch.Size, ctx: EffectContext, dtype: torch.dtype, device) -> torch.Tensor:
    length = shape[-1]
    white = ctx.rng.normal_tensor(shape, dtype=dtype, device=device)
    spectrum = torch.fft.rfft(white, dim=-1)
    freqs = torch.arange(spectrum.shape[-1], dtype=dtype, device=device)
    freqs[0] = 1.0
    shaped = spectrum / freqs.sqrt()
    shaped[..., 0] = 0
    return torch.fft.irfft(shaped, n=length, dim=-1)


def babble(wave: torch.Tensor, ctx: EffectContext, talkers: int) -> torch.Tensor:
    length = wave.shape[-1]
    pool = [clip.reshape(-1) for clip in ctx.babble_pool if clip.numel() > 0]
    if not pool:
        logger.warning("Babble pool is empty, mixing shifted copies of the input instead")
        pool = [row.detach() for row in wave.detach().reshape(-1, length)]

    total = torch.zeros(length, dtype=wave.dtype, device=wave.device)
    for _ in range(talkers):
        talker = pool[int(ctx.rng.integers(0, len(pool)))].to(dtype=wave.dtype, device=wave.device)
        reps = -(-length // talker.shape[0])
        tiled = talker.repeat(reps)[:length] if reps > 1 else talker[:length]
        total = total + torch.roll(tiled, int(ctx.rng.integers(0, length)))
    return total.expand_as(wave)


class GaussianNoiseEffect(BaseEffect):
    name = EffectId.GAUSSIAN_NOISE.value
    param_specs = (_SNR,)

    def apply(self, wave: torch.Tensor, params: Mapping[str, float], ctx: EffectContext) -> torch.Tensor:
        noise = ctx.rng.normal_tensor(wave.shape, dtype=wave.dtype, device=wave.device)
        return add_at_snr(wave, noise, params["snr_db"])


class PinkNoiseEffect(BaseEffect):
    name = EffectId.PINK_NOISE.value
    param_specs = (_SNR,)

    def apply(self, wave: torch.Tensor, params: Mapping[str, float], ctx: EffectContext) -> torch.Tensor:
        noise = pink_noise(wave.shape, ctx, wave.dtype, wave.device)
        return add_at_snr(wave, noise, params["snr_db"])


class BabbleNoiseEffect(BaseEffect):
    name = EffectId.BABBLE_NOISE.value
    param_specs = (_SNR,)

    def apply(self, wave: torch.Tensor, params: Mapping[str, float], ctx: EffectContext) -> torch.Tensor:
        noise = babble(wave, ctx, settings.BABBLE_TALKERS)
        return add_at_snr(wave, noise, params["snr_db"])
