"""
networks/locator.py

Lightweight watermark locator with strict input/output alignment.

Encoder: three Conv K7 S2 P3 blocks (64 channels) giving stride-2/4/8
features; blocks 2 and 3 share weights by default. Decoder: three fusion
stages. The stride-8 features are projected, upsampled ×2 by a separable
transposed conv (K4 S2 P1) and summed with the projected stride-4
features, then again with stride-2, then a final ×2 back to the sample rate.
The input is zero-padded to a multiple of 8 and the output cropped, so
len(output) == len(input) for every T ≥ 1.
"""

from __future__ import annotations

import logging

import torch
import torch.nn as nn
from pydantic import BaseModel, ConfigDict, Field

from ..core.models import AudioClip, PresenceMask
from ..errors import ClipTooShortError
from .layers import ConvBlock, ConvBlockSpec, SeparableConvTranspose1d, pad_to_multiple

logger = logging.getLogger(__name__)

_TOTAL_STRIDE = 8


class LocatorConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    channels: int = Field(64, ge=1)
    kernel: int = Field(7, ge=1)
    share_weights: bool = True


class LocatorModel(nn.Module):
    def __init__(self, config: LocatorConfig | None = None) -> None:
        super().__init__()
        self.config = config = config or LocatorConfig()
        c, k = config.channels, config.kernel
        self.enc1 = ConvBlock(ConvBlockSpec(k, 2, k // 2, 1, c))
        self.enc2 = ConvBlock(ConvBlockSpec(k, 2, k // 2, c, c))
        self.enc3 = self.enc2 if config.share_weights else ConvBlock(ConvBlockSpec(k, 2, k // 2, c, c))

        self.proj8 = nn.Conv1d(c, c, 1)
        self.proj4 = nn.Conv1d(c, c, 1)
        self.proj2 = nn.Conv1d(c, c, 1)
        self.up8 = SeparableConvTranspose1d(c, c)
        self.up4 = SeparableConvTranspose1d(c, c)
        self.up2 = SeparableConvTranspose1d(c, c)
        self.act = nn.Mish()
        self.head = nn.Conv1d(c, 1, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """x (B, T) → presence probabilities (B, T)."""
        length = x.shape[-1]
        if length < 1:
            raise ClipTooShortError("locator needs at least one sample")
        h = pad_to_multiple(x, _TOTAL_STRIDE).unsqueeze(1)
        f2 = self.enc1(h)
        f4 = self.enc2(f2)
        f8 = self.enc3(f4)

        d = self.act(self.up8(self.proj8(f8))) + self.proj4(f4)
        d = self.act(self.up4(d)) + self.proj2(f2)
        d = self.act(self.up2(d))
        return torch.sigmoid(self.head(d)).squeeze(1)[..., :length]


def locate(model: LocatorModel, clip: AudioClip) -> PresenceMask:
    param = next(model.parameters())
    x = clip.to_tensor(param.dtype).to(param.device).unsqueeze(0)
    with torch.no_grad():
        probs = model(x)[0]
    return PresenceMask.from_tensor(probs.clamp(0.0, 1.0), hard=False)
