"""
networks/layers.py

Building blocks shared by the generator, detector and locator, plus the
convolution length arithmetic every network relies on:

    T_out = ⌊(T_in + 2P − K) / S⌋ + 1          (Conv1d)
    T_out = (T_in − 1)·S − 2P + K               (ConvTranspose1d)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn

from ..errors import ClipTooShortError, ShapeMismatchError

NORM_GROUPS = 8


@dataclass(frozen=True, slots=True)
class ConvBlockSpec:
    kernel: int
    stride: int
    padding: int
    in_channels: int = 1
    out_channels: int = 1

    def __post_init__(self) -> None:
        if not self.kernel >= self.stride >= 1:
            raise ShapeMismatchError(f"need kernel >= stride >= 1, got K={self.kernel} S={self.stride}")
        if self.padding < 0:
            raise ShapeMismatchError(f"padding must be >= 0, got {self.padding}")


def conv_out_len(t_in: int, spec: ConvBlockSpec) -> int:
    if t_in + 2 * spec.padding < spec.kernel:
        raise ClipTooShortError(
            f"input of {t_in} samples too short for K={spec.kernel} P={spec.padding}"
        )
    return (t_in + 2 * spec.padding - spec.kernel) // spec.stride + 1


def conv_transpose_out_len(t_in: int, spec: ConvBlockSpec) -> int:
    return (t_in - 1) * spec.stride - 2 * spec.padding + spec.kernel


def pad_to_multiple(wave: torch.Tensor, multiple: int) -> torch.Tensor:
    """Zero-pad the last dimension up to the next multiple."""
    extra = -wave.shape[-1] % multiple
    return nn.functional.pad(wave, (0, extra)) if extra else wave


def norm_groups(channels: int) -> int:
    return math.gcd(NORM_GROUPS, channels)


# ---------------------------------------------------------------------------
# Modules
# ---------------------------------------------------------------------------

class SeparableConv1d(nn.Module):
    """Depthwise (per-channel) convolution followed by a 1×1 channel mix."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        stride: int = 1,
        padding: int = 0,
        padding_mode: str = "zeros",
    ) -> None:
        super().__init__()
        self.depthwise = nn.Conv1d(
            in_channels, in_channels, kernel_size, stride=stride, padding=padding,
            groups=in_channels, padding_mode=padding_mode,
        )
        self.pointwise = nn.Conv1d(in_channels, out_channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.pointwise(self.depthwise(x))


class SeparableConvTranspose1d(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int = 4, stride: int = 2, padding: int = 1) -> None:
        super().__init__()
        self.depthwise = nn.ConvTranspose1d(
            in_channels, in_channels, kernel_size, stride=stride, padding=padding, groups=in_channels,
        )
        self.pointwise = nn.Conv1d(in_channels, out_channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.pointwise(self.depthwise(x))


class ConvBlock(nn.Module):
    """Strided Conv1d → GroupNorm → Mish."""

    def __init__(self, spec: ConvBlockSpec, padding_mode: str = "zeros") -> None:
        super().__init__()
        self.spec = spec
        self.conv = nn.Conv1d(
            spec.in_channels, spec.out_channels, spec.kernel,
            stride=spec.stride, padding=spec.padding, padding_mode=padding_mode,
        )
        self.norm = nn.GroupNorm(norm_groups(spec.out_channels), spec.out_channels)
        self.act = nn.Mish()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.act(self.norm(self.conv(x)))


def count_parameters(module: nn.Module) -> int:
    """Distinct trainable parameters (shared weights counted once)."""
    return sum(p.numel() for p in module.parameters() if p.requires_grad)
