"""
networks/generator.py

FiLM-conditioned encoder-decoder generator.

    x ─ stem ─┬─ level 0: sep-conv ↓2 ⊕ spectral branch → FiLM → residual ─┐
              │   ...                                                     │ skips
              └─ level L-1: sep-conv ↓2 → FiLM → residual ── decoder ↑2 ×L ┘ → tanh·α_w = δ

The input is zero-padded to a multiple of 2^L and the residual cropped
back, so δ always has the input's length. The watermarked signal is
clamp(x + δ, −1, 1).
"""

from __future__ import annotations

import logging
from typing import Sequence

import torch
import torch.nn as nn
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..core.models import AudioClip, MessageBits
from ..errors import ClipTooShortError, ShapeMismatchError
from .film import FiLMParams, MessageFiLM, film_modulate
from .layers import SeparableConv1d, pad_to_multiple

logger = logging.getLogger(__name__)


def parse_channels(v):
    if isinstance(v, str):
        return [int(part) for part in v.replace(" ", "").split(",") if part]
    return v


class GeneratorConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_bits: int = Field(16, ge=1)
    channels: tuple[int, ...] = (32, 64, 96, 128)
    bands: int = Field(4, ge=1)
    residual_gain: float = Field(0.1, gt=0)
    kernel: int = Field(7, ge=1)
    hidden: int = Field(128, ge=1)
    spectral_branch: bool = True
    spectral_n_fft: int = Field(16, ge=2)
    zero_init_output: bool = False

    @field_validator("channels", mode="before")
    @classmethod
    def parse_channel_list(cls, v):
        return parse_channels(v)

    @model_validator(mode="after")
    def _check(self) -> "GeneratorConfig":
        if not self.channels:
            raise ValueError("generator needs at least one level")
        bad = [c for c in self.channels if c < 1 or c % self.bands]
        if bad:
            raise ValueError(f"channels {bad} not divisible into {self.bands} bands")
        if self.kernel % 2 == 0:
            raise ValueError("kernel must be odd")
        return self

    @property
    def levels(self) -> int:
        return len(self.channels)

    @property
    def min_length(self) -> int:
        return 2 ** self.levels


class SpectralBranch(nn.Module):
    """Log-magnitude STFT features (hop 2) projected to the level-0 width."""

    def __init__(self, n_fft: int, out_channels: int) -> None:
        super().__init__()
        self.n_fft = n_fft
        self.hop = 2
        self.register_buffer("window", torch.hann_window(n_fft), persistent=False)
        self.proj = nn.Conv1d(n_fft // 2 + 1, out_channels, 1)

    def forward(self, x: torch.Tensor, frames: int) -> torch.Tensor:
        spec = torch.stft(
            x, self.n_fft, hop_length=self.hop, window=self.window.to(x.dtype),
            center=True, pad_mode="constant", return_complex=True,
        )
        mag = torch.sqrt(spec.real.pow(2) + spec.imag.pow(2) + 1e-8)
        return self.proj(torch.log1p(mag)[..., :frames])


class GeneratorModel(nn.Module):
    def __init__(self, config: GeneratorConfig | None = None) -> None:
        super().__init__()
        self.config = config = config or GeneratorConfig()
        k, pad = config.kernel, config.kernel // 2
        chans = list(config.channels)

        self.film = MessageFiLM(config.n_bits, chans, config.bands, config.hidden)
        self.stem = nn.Conv1d(1, chans[0], k, padding=pad)
        self.act = nn.Mish()

        self.down = nn.ModuleList()
        self.res = nn.ModuleList()
        prev = chans[0]
        for c in chans:
            self.down.append(SeparableConv1d(prev, c, k, stride=2, padding=pad))
            self.res.append(SeparableConv1d(c, c, k, padding=pad))
            prev = c

        self.spectral = SpectralBranch(config.spectral_n_fft, chans[0]) if config.spectral_branch else None
        self.merge = nn.Conv1d(2 * chans[0], chans[0], 1) if config.spectral_branch else None

        # decoder level i maps chans[i] → width of level i's input
        self.up = nn.ModuleList(
            nn.ConvTranspose1d(c, chans[i - 1] if i > 0 else chans[0], 4, stride=2, padding=1)
            for i, c in enumerate(chans)
        )
        self.out = nn.Conv1d(chans[0], 1, k, padding=pad)
        if config.zero_init_output:
            nn.init.zeros_(self.out.weight)
            nn.init.zeros_(self.out.bias)

    def message_to_film(self, bits: torch.Tensor) -> list[FiLMParams]:
        return self.film(bits)

    def residual(
        self,
        x: torch.Tensor,
        bits: torch.Tensor | None = None,
        film: Sequence[FiLMParams] | None = None,
    ) -> torch.Tensor:
        """
        δ for x (B, T). FiLM comes from bits, or is given directly; with
        neither the network runs unconditioned (no modulation).
        """
        length = x.shape[-1]
        if length < self.config.min_length:
            raise ClipTooShortError(
                f"generator needs >= {self.config.min_length} samples, got {length}"
            )
        if film is None and bits is not None:
            film = self.film(bits)
        if film is not None and len(film) != self.config.levels:
            raise ShapeMismatchError(f"expected {self.config.levels} FiLM levels, got {len(film)}")

        h = self.act(self.stem(pad_to_multiple(x, self.config.min_length).unsqueeze(1)))
        skips = []
        for level, (down, res) in enumerate(zip(self.down, self.res)):
            skips.append(h)
            h = self.act(down(h))
            if level == 0 and self.spectral is not None:
                spec = self.spectral(pad_to_multiple(x, self.config.min_length), h.shape[-1])
                h = self.merge(torch.cat([h, spec], dim=1))
            if film is not None:
                h = film_modulate(h, film[level])
            h = h + res(self.act(h))

        for level in reversed(range(self.config.levels)):
            h = self.act(self.up[level](h)) + skips[level]

        delta = self.config.residual_gain * torch.tanh(self.out(h))
        return delta.squeeze(1)[..., :length]

    def forward(self, x: torch.Tensor, bits: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """(watermarked, residual) for x (B, T) and bits (B, n_bits)."""
        delta = self.residual(x, bits)
        return torch.clamp(x + delta, -1.0, 1.0), delta


# ---------------------------------------------------------------------------
# Clip-level API
# ---------------------------------------------------------------------------

def message_to_film(model: GeneratorModel, message: MessageBits) -> list[FiLMParams]:
    if message.n != model.config.n_bits:
        raise ShapeMismatchError(f"message has {message.n} bits, model expects {model.config.n_bits}")
    param = next(model.parameters())
    with torch.no_grad():
        batched = model.message_to_film(message.to_tensor(param.dtype).to(param.device).unsqueeze(0))
    return [FiLMParams(p.gamma[0], p.beta[0], p.level, p.bands) for p in batched]


def embed(model: GeneratorModel, clip: AudioClip, message: MessageBits) -> tuple[AudioClip, AudioClip]:
    """(watermarked, residual) for one clip."""
    if message.n != model.config.n_bits:
        raise ShapeMismatchError(f"message has {message.n} bits, model expects {model.config.n_bits}")
    param = next(model.parameters())
    x = clip.to_tensor(param.dtype).to(param.device).unsqueeze(0)
    bits = message.to_tensor(param.dtype).to(param.device).unsqueeze(0)
    with torch.no_grad():
        wm, delta = model(x, bits)
    logger.debug("Embedded %r into %r (max |δ| = %.4f)", message, clip, float(delta.abs().max()))
    return AudioClip.from_tensor(wm, clip.sample_rate), AudioClip.from_tensor(delta, clip.sample_rate)
