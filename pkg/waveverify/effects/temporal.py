"""
effects/temporal.py

Temporal augmentations: segment replacement and sequence permutation.

segment_augment
    Splits the clip into ⌊T / seg⌋ fixed segments and modifies exactly
    ⌈modify_fraction · S⌉ of them, chosen without replacement. Each chosen
    segment independently becomes the non-watermarked original, silence, or
    the aligned span of a different clip (equal odds). The mask is zeroed
    over every modified segment. The trailing partial segment is never
    touched.

sequence_augment
    One index permutation applied to both samples and mask: full reversal,
    circular rotation by a uniform offset, or a shuffle of contiguous
    shuffle_len_s blocks (trailing remainder stays in place).

Tensor variants operate on 1-D tensors and keep autograd through the
watermarked input; the AudioClip variants wrap them.
"""

from __future__ import annotations

import logging
from enum import IntEnum
from typing import Literal

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field

from ..core.models import AudioClip, PresenceMask, RandomSource, ceil_fraction
from ..errors import ClipTooShortError, MaskMismatchError

logger = logging.getLogger(__name__)

SequenceKind = Literal["reverse", "rotate", "shuffle"]
SEQUENCE_KINDS: tuple[SequenceKind, ...] = ("reverse", "rotate", "shuffle")


class TemporalAugSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    segment_len_s: float = Field(0.1, gt=0)
    modify_fraction: float = Field(0.2, ge=0, le=1)
    sequence_kind: SequenceKind = "reverse"
    shuffle_len_s: float = Field(0.5, gt=0)


class SegmentKind(IntEnum):
    ORIGINAL = 0
    SILENCE = 1
    ALTERNATIVE = 2


def _samples(seconds: float, sample_rate: int) -> int:
    return max(1, int(round(seconds * sample_rate)))


# ---------------------------------------------------------------------------
# Segment replacement
# ---------------------------------------------------------------------------

def plan_segments(
    length: int, sample_rate: int, spec: TemporalAugSpec, rng: RandomSource
) -> list[tuple[int, int, SegmentKind]]:
    """Chosen (start, end, kind) triples, sorted by start."""
    seg = _samples(spec.segment_len_s, sample_rate)
    count = length // seg
    if count == 0:
        raise ClipTooShortError(
            f"clip of {length} samples is shorter than one {seg}-sample segment"
        )
    n_modify = ceil_fraction(spec.modify_fraction, count)
    if n_modify == 0:
        return []
    chosen = np.sort(rng.choice(count, size=n_modify, replace=False))
    kinds = rng.integers(0, len(SegmentKind), size=n_modify)
    return [(int(i) * seg, (int(i) + 1) * seg, SegmentKind(int(k))) for i, k in zip(chosen, kinds)]


def segment_augment_tensor(
    wm: torch.Tensor,
    original: torch.Tensor,
    alternative: torch.Tensor,
    mask: torch.Tensor,
    spec: TemporalAugSpec,
    rng: RandomSource,
    sample_rate: int,
) -> tuple[torch.Tensor, torch.Tensor]:
    length = wm.shape[-1]
    if original.shape[-1] != length:
        raise MaskMismatchError(f"original length {original.shape[-1]} != watermarked length {length}")
    if alternative.shape[-1] < length:
        raise ClipTooShortError(
            f"alternative clip has {alternative.shape[-1]} samples, needs >= {length}"
        )
    if mask.shape[-1] != length:
        raise MaskMismatchError(f"mask length {mask.shape[-1]} != clip length {length}")

    plan = plan_segments(length, sample_rate, spec, rng)
    if not plan:
        return wm, mask

    kind_map = torch.full((length,), -1, dtype=torch.long, device=wm.device)
    for start, end, kind in plan:
        kind_map[start:end] = int(kind)

    aligned = alternative[..., :length].to(wm.dtype)
    out = torch.where(kind_map == SegmentKind.ORIGINAL, original.to(wm.dtype), wm)
    out = torch.where(kind_map == SegmentKind.SILENCE, torch.zeros_like(wm), out)
    out = torch.where(kind_map == SegmentKind.ALTERNATIVE, aligned, out)
    out_mask = torch.where(kind_map >= 0, torch.zeros_like(mask), mask)
    logger.debug("segment_augment modified %d segment(s): %s", len(plan), plan)
    return out, out_mask


def segment_augment(
    wm: AudioClip,
    original: AudioClip,
    alternative: AudioClip,
    mask: PresenceMask,
    spec: TemporalAugSpec,
    rng: RandomSource,
) -> tuple[AudioClip, PresenceMask]:
    mask.check_paired(wm)
    wm_t = wm.to_tensor()
    out, out_mask = segment_augment_tensor(
        wm_t, original.to_tensor(), alternative.to_tensor(),
        mask.to_tensor(), spec, rng, wm.sample_rate,
    )
    if out is wm_t:
        return wm, mask
    return AudioClip.from_tensor(out, wm.sample_rate), PresenceMask.from_tensor(out_mask, hard=mask.hard)


# ---------------------------------------------------------------------------
# Sequence permutation
# ---------------------------------------------------------------------------

def rotation_permutation(length: int, offset: int) -> np.ndarray:
    """Indices such that out[i] = x[(i - offset) mod length]."""
    return (np.arange(length) - offset) % length


def shuffle_permutation(length: int, block: int, rng: RandomSource) -> np.ndarray:
    n_blocks = length // block
    if n_blocks < 2:
        return np.arange(length)
    order = rng.permutation(n_blocks)
    head = (order[:, None] * block + np.arange(block)[None, :]).reshape(-1)
    return np.concatenate([head, np.arange(n_blocks * block, length)])


def sequence_permutation(
    length: int, sample_rate: int, spec: TemporalAugSpec, rng: RandomSource
) -> np.ndarray:
    if spec.sequence_kind == "reverse":
        return np.arange(length)[::-1].copy()
    if spec.sequence_kind == "rotate":
        return rotation_permutation(length, int(rng.integers(0, length)))
    return shuffle_permutation(length, _samples(spec.shuffle_len_s, sample_rate), rng)


def sequence_augment_tensor(
    wave: torch.Tensor,
    mask: torch.Tensor,
    spec: TemporalAugSpec,
    rng: RandomSource,
    sample_rate: int,
) -> tuple[torch.Tensor, torch.Tensor]:
    length = wave.shape[-1]
    if mask.shape[-1] != length:
        raise MaskMismatchError(f"mask length {mask.shape[-1]} != clip length {length}")
    perm = torch.from_numpy(sequence_permutation(length, sample_rate, spec, rng)).to(wave.device)
    return wave.index_select(-1, perm), mask.index_select(-1, perm.to(mask.device))


def sequence_augment(
    clip: AudioClip,
    mask: PresenceMask,
    spec: TemporalAugSpec,
    rng: RandomSource,
) -> tuple[AudioClip, PresenceMask]:
    mask.check_paired(clip)
    out, out_mask = sequence_augment_tensor(clip.to_tensor(), mask.to_tensor(), spec, rng, clip.sample_rate)
    return AudioClip.from_tensor(out, clip.sample_rate), PresenceMask.from_tensor(out_mask, hard=mask.hard)
