"""
core/masks.py

Mask algebra: construction, nearest-neighbour length mapping and
max-pooling to detector frame rate.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F

from ..errors import MaskMismatchError
from .models import PresenceMask


def mask_full(length: int, value: int = 1) -> PresenceMask:
    """Constant hard mask of the given length."""
    if length < 1:
        raise MaskMismatchError(f"mask length must be >= 1, got {length}")
    if value not in (0, 1):
        raise MaskMismatchError(f"mask value must be 0 or 1, got {value}")
    return PresenceMask(torch.full((length,), float(value)).numpy(), hard=True)


def nearest_indices(src_len: int, dst_len: int) -> torch.Tensor:
    """Index map for nearest-neighbour resampling src_len → dst_len."""
    positions = (torch.arange(dst_len, dtype=torch.float64) + 0.5) * (src_len / dst_len) - 0.5
    return positions.round().clamp_(0, src_len - 1).to(torch.long)


def resample_mask(mask: torch.Tensor, length: int) -> torch.Tensor:
    """Nearest-neighbour resample of mask (..., T) to (..., length)."""
    if mask.shape[-1] == length:
        return mask
    return mask.index_select(-1, nearest_indices(mask.shape[-1], length).to(mask.device))


def pool_mask_to_frames(mask: torch.Tensor, num_frames: int) -> torch.Tensor:
    """
    Max-pool a per-sample mask (B, T) onto num_frames detector frames.

    Frame j covers samples [j·hop, (j+1)·hop) with hop = ⌈T / num_frames⌉;
    samples past the end count as 0 (no watermark).
    """
    total = mask.shape[-1]
    hop = max(1, math.ceil(total / num_frames))
    padded = F.pad(mask, (0, hop * num_frames - total))
    return F.max_pool1d(padded.unsqueeze(1), kernel_size=hop, stride=hop).squeeze(1)[..., :num_frames]
