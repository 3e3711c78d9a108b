"""
networks/film.py

Message → FiLM parameters.

A two-layer MLP maps the payload (bits as ±1) to a shared hidden vector;
one linear head per encoder level projects it to that level's (g, β),
with γ = 1 + g so zero weights give the identity modulation. A level's
C channels are partitioned into B contiguous frequency bands, and band b
is driven only by rows [b·C/B, (b+1)·C/B) of its head.

Modulation is applied without any normalization: F' = γ[c]·F[c, t] + β[c].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch
import torch.nn as nn

from ..errors import ShapeMismatchError


@dataclass
class FiLMParams:
    gamma: torch.Tensor
    """(C,) or (B, C)."""

    beta: torch.Tensor
    level: int
    bands: int = 1

    def __post_init__(self) -> None:
        if self.gamma.shape != self.beta.shape:
            raise ShapeMismatchError(
                f"gamma {tuple(self.gamma.shape)} and beta {tuple(self.beta.shape)} differ"
            )

    @property
    def channels(self) -> int:
        return int(self.gamma.shape[-1])

    def band_slice(self, band: int) -> slice:
        width = self.channels // self.bands
        return slice(band * width, (band + 1) * width)

    @classmethod
    def identity(cls, channels: int, level: int = 0, bands: int = 1) -> "FiLMParams":
        return cls(torch.ones(channels), torch.zeros(channels), level, bands)


def film_modulate(features: torch.Tensor, params: FiLMParams) -> torch.Tensor:
    """features (C, T) or (B, C, T) → γ[c]·F[c, t] + β[c]."""
    channels = features.shape[-2]
    if params.channels != channels:
        raise ShapeMismatchError(
            f"FiLM level {params.level} has {params.channels} channels, features have {channels}"
        )
    gamma = params.gamma.to(features.dtype).unsqueeze(-1)
    beta = params.beta.to(features.dtype).unsqueeze(-1)
    if gamma.dim() == 3 and features.dim() == 3 and gamma.shape[0] not in (1, features.shape[0]):
        raise ShapeMismatchError(
            f"FiLM batch {gamma.shape[0]} does not match feature batch {features.shape[0]}"
        )
    return gamma * features + beta


class MessageFiLM(nn.Module):
    def __init__(self, n_bits: int, level_channels: Sequence[int], bands: int, hidden: int = 128) -> None:
        super().__init__()
        for c in level_channels:
            if c % bands:
                raise ShapeMismatchError(f"{c} channels not divisible into {bands} bands")
        self.n_bits = n_bits
        self.bands = bands
        self.level_channels = list(level_channels)
        self.trunk = nn.Sequential(
            nn.Linear(n_bits, hidden),
            nn.Mish(),
            nn.Linear(hidden, hidden),
            nn.Mish(),
        )
        self.heads = nn.ModuleList(nn.Linear(hidden, 2 * c) for c in level_channels)

    def forward(self, bits: torch.Tensor) -> list[FiLMParams]:
        """bits (B, n_bits) in {0,1} (float) → one FiLMParams per level, batched."""
        if bits.shape[-1] != self.n_bits:
            raise ShapeMismatchError(f"message has {bits.shape[-1]} bits, model expects {self.n_bits}")
        hidden = self.trunk(2.0 * bits - 1.0)
        params = []
        for level, head in enumerate(self.heads):
            g, beta = head(hidden).chunk(2, dim=-1)
            params.append(FiLMParams(1.0 + g, beta, level, self.bands))
        return params

    def zero_band(self, level: int, band: int) -> None:
        """Zero the head rows that drive one band at one level (γ → 1, β → 0 there)."""
        channels = self.level_channels[level]
        width = channels // self.bands
        rows = list(range(band * width, (band + 1) * width))
        rows += [channels + r for r in rows]
        head = self.heads[level]
        with torch.no_grad():
            head.weight[rows] = 0
            head.bias[rows] = 0
