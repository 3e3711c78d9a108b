"""
networks/detector.py

Mixture-of-experts message detector.

    x → 4 × [Conv1d K7 S2 P3 → GroupNorm → Mish] = z         (stride 16)
      → Σ_i σ(gate_i(z)) ⊙ expert_i(z)                        (E = 4)
      → 1×1 conv → sigmoid  = per-frame bit probabilities     (stride 8)

Each expert is 3 depthwise-separable K3 layers followed by ×2 nearest
unpooling. Gates are one scalar per expert per clip (time-pooled linear
map of z) by default, or one per frame with gating="frame". Sigmoid
gates are not normalized.
"""

from __future__ import annotations

import logging
from typing import Literal

import numpy as np
import torch
import torch.nn as nn
from pydantic import BaseModel, ConfigDict, Field, field_validator

from ..core.masks import pool_mask_to_frames
from ..core.models import AudioClip, MessageBits, PresenceMask
from ..errors import ClipTooShortError, ShapeMismatchError
from .generator import parse_channels
from .layers import ConvBlock, ConvBlockSpec, SeparableConv1d, conv_out_len, norm_groups

logger = logging.getLogger(__name__)


class DetectorConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_bits: int = Field(16, ge=1)
    channels: tuple[int, ...] = (32, 64, 96, 128)
    kernel: int = Field(7, ge=1)
    n_experts: int = Field(4, ge=1)
    expert_layers: int = Field(3, ge=1)
    expert_kernel: int = Field(3, ge=1)
    unpool: int = Field(2, ge=1)
    gating: Literal["clip", "frame"] = "clip"
    padding_mode: Literal["zeros", "circular"] = "zeros"

    @field_validator("channels", mode="before")
    @classmethod
    def parse_channel_list(cls, v):
        return parse_channels(v)

    def block_specs(self) -> list[ConvBlockSpec]:
        specs, prev = [], 1
        for c in self.channels:
            specs.append(ConvBlockSpec(self.kernel, 2, self.kernel // 2, prev, c))
            prev = c
        return specs


def moe_combine(expert_outputs: torch.Tensor, gate_logits: torch.Tensor) -> torch.Tensor:
    """
    Σ_i σ(g_i) ⊙ f_i.

    expert_outputs: (B, E, C, T)
    gate_logits:    (B, E) per-clip, or (B, E, T) per-frame
    """
    if expert_outputs.dim() != 4:
        raise ShapeMismatchError(f"expert outputs must be (B, E, C, T), got {tuple(expert_outputs.shape)}")
    batch, experts, _, frames = expert_outputs.shape
    if gate_logits.shape[:2] != (batch, experts):
        raise ShapeMismatchError(
            f"gate logits {tuple(gate_logits.shape)} do not match {experts} experts × batch {batch}"
        )
    if gate_logits.dim() == 2:
        weights = torch.sigmoid(gate_logits)[..., None, None]
    elif gate_logits.dim() == 3 and gate_logits.shape[-1] == frames:
        weights = torch.sigmoid(gate_logits).unsqueeze(2)
    else:
        raise ShapeMismatchError(f"gate logits {tuple(gate_logits.shape)} incompatible with {frames} frames")
    return (weights * expert_outputs).sum(dim=1)


class Expert(nn.Module):
    def __init__(self, channels: int, layers: int, kernel: int, unpool: int, padding_mode: str) -> None:
        super().__init__()
        blocks: list[nn.Module] = []
        for _ in range(layers):
            blocks += [
                SeparableConv1d(channels, channels, kernel, padding=kernel // 2, padding_mode=padding_mode),
                nn.GroupNorm(norm_groups(channels), channels),
                nn.Mish(),
            ]
        self.body = nn.Sequential(*blocks)
        self.unpool = nn.Upsample(scale_factor=unpool, mode="nearest")

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        return self.unpool(self.body(z))


class DetectorModel(nn.Module):
    def __init__(self, config: DetectorConfig | None = None) -> None:
        super().__init__()
        self.config = config = config or DetectorConfig()
        width = config.channels[-1]
        self.encoder = nn.Sequential(*(ConvBlock(s, config.padding_mode) for s in config.block_specs()))
        self.experts = nn.ModuleList(
            Expert(width, config.expert_layers, config.expert_kernel, config.unpool, config.padding_mode)
            for _ in range(config.n_experts)
        )
        if config.gating == "clip":
            self.gate: nn.Module = nn.Linear(width, config.n_experts)
        else:
            self.gate = nn.Conv1d(width, config.n_experts, 1)
        self.head = nn.Conv1d(width, config.n_bits, 1)

    def num_frames(self, length: int) -> int:
        for spec in self.config.block_specs():
            length = conv_out_len(length, spec)
        return length * self.config.unpool

    def gate_logits(self, z: torch.Tensor) -> torch.Tensor:
        if self.config.gating == "clip":
            return self.gate(z.mean(dim=-1))
        logits = self.gate(z)
        return torch.repeat_interleave(logits, self.config.unpool, dim=-1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """x (B, T) → bit probabilities (B, n_bits, T')."""
        self.num_frames(x.shape[-1])  # raises when too short
        z = self.encoder(x.unsqueeze(1))
        outputs = torch.stack([expert(z) for expert in self.experts], dim=1)
        combined = moe_combine(outputs, self.gate_logits(z))
        return torch.sigmoid(self.head(combined))


def aggregate_bits(probs: torch.Tensor, frame_mask: torch.Tensor | None = None) -> torch.Tensor:
    """
    Mean per-bit probability over frames (B, n_bits, T') → (B, n_bits).

    With a frame mask (B, T') the mean runs over frames where it is 1; rows
    whose mask is empty fall back to all frames.
    """
    if frame_mask is None:
        return probs.mean(dim=-1)
    weights = frame_mask.to(probs.dtype)
    counts = weights.sum(dim=-1, keepdim=True)
    weights = torch.where(counts > 0, weights, torch.ones_like(weights))
    weights = weights.unsqueeze(1)
    return (probs * weights).sum(dim=-1) / weights.sum(dim=-1)


def detect(
    model: DetectorModel,
    clip: AudioClip,
    mask: PresenceMask | None = None,
) -> tuple[np.ndarray, MessageBits]:
    """
    Per-frame bit probabilities (n_bits, T') and the thresholded message.

    When a (possibly soft) presence mask is supplied the time average is
    restricted to frames that contain watermark (mask ≥ 0.5).
    """
    param = next(model.parameters())
    try:
        model.num_frames(clip.num_samples)
    except ClipTooShortError as exc:
        raise ClipTooShortError(f"clip too short for detector: {exc}") from exc
    x = clip.to_tensor(param.dtype).to(param.device).unsqueeze(0)
    with torch.no_grad():
        probs = model(x)
        frame_mask = None
        if mask is not None:
            mask.check_paired(clip)
            hard = mask.binarize().to_tensor(param.dtype).to(param.device).unsqueeze(0)
            frame_mask = pool_mask_to_frames(hard, probs.shape[-1])
        mean = aggregate_bits(probs, frame_mask)[0]
    bits = MessageBits(tuple(int(v) for v in (mean >= 0.5).tolist()))
    return probs[0].cpu().numpy(), bits
