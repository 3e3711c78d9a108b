"""
networks/discriminator.py

Multi-scale waveform discriminator: three identical sub-discriminators see
the signal at 1×, 2× and 4× average-pooled resolution. Each has four
strided conv layers (every layer output is a feature tap) and a score conv.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .generator import parse_channels


class DiscriminatorConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    scales: int = Field(3, ge=1)
    channels: tuple[int, ...] = (16, 32, 64, 64)

    @field_validator("channels", mode="before")
    @classmethod
    def parse_channel_list(cls, v):
        return parse_channels(v)


class ScaleDiscriminator(nn.Module):
    def __init__(self, channels: tuple[int, ...]) -> None:
        super().__init__()
        layers = []
        prev = 1
        for i, c in enumerate(channels):
            kernel, stride = (15, 1) if i == 0 else (41, 4) if i < len(channels) - 1 else (5, 2)
            layers.append(nn.Conv1d(prev, c, kernel, stride=stride, padding=kernel // 2))
            prev = c
        self.layers = nn.ModuleList(layers)
        self.score = nn.Conv1d(prev, 1, 3, padding=1)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor]]:
        features = []
        h = x
        for layer in self.layers:
            h = F.leaky_relu(layer(h), 0.2)
            features.append(h)
        return self.score(h), features


class DiscriminatorStack(nn.Module):
    def __init__(self, config: DiscriminatorConfig | None = None) -> None:
        super().__init__()
        self.config = config = config or DiscriminatorConfig()
        self.discriminators = nn.ModuleList(ScaleDiscriminator(config.channels) for _ in range(config.scales))

    def forward(self, x: torch.Tensor) -> tuple[list[torch.Tensor], list[list[torch.Tensor]]]:
        """x (B, T) → (per-scale score maps, per-scale feature taps)."""
        h = x.unsqueeze(1)
        scores, features = [], []
        for i, disc in enumerate(self.discriminators):
            if i > 0:
                h = F.avg_pool1d(h, kernel_size=2, stride=2, ceil_mode=True)
            score, feats = disc(h)
            scores.append(score)
            features.append(feats)
        return scores, features
