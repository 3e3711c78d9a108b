"""
evaluation/metrics.py

Watermark metrics: BER, two-class MIoU, TPR/FPR and SI-SNR.

MIoU averages the IoU of the "watermarked" and "clean" classes; a class
absent from both prediction and truth scores 1. Predictions are binarized
with p ≥ 0.5.
"""

from __future__ import annotations

import math
from typing import Collection, Sequence

import numpy as np
import torch

from ..core.models import AudioClip, MessageBits, PresenceMask
from ..errors import MaskMismatchError, ParameterRangeError, ShapeMismatchError

SISNR_CAP_DB = 100.0


def ber(pred: MessageBits, truth: MessageBits) -> float:
    if pred.n != truth.n:
        raise ShapeMismatchError(f"message lengths differ: {pred.n} vs {truth.n}")
    return sum(p != t for p, t in zip(pred.bits, truth.bits)) / truth.n


def _class_iou(pred: np.ndarray, truth: np.ndarray) -> float:
    union = np.sum(pred | truth)
    if union == 0:
        return 1.0
    return float(np.sum(pred & truth) / union)


def miou(pred: PresenceMask, truth: PresenceMask) -> float:
    if len(pred) != len(truth):
        raise MaskMismatchError(f"mask lengths differ: {len(pred)} vs {len(truth)}")
    p = pred.values >= 0.5
    t = truth.values >= 0.5
    return (_class_iou(p, t) + _class_iou(~p, ~t)) / 2


def batch_ber(pred_bits: torch.Tensor, truth_bits: torch.Tensor) -> torch.Tensor:
    """Per-row BER for (B, n) 0/1 tensors."""
    if pred_bits.shape != truth_bits.shape:
        raise ShapeMismatchError(f"bit tensors differ: {tuple(pred_bits.shape)} vs {tuple(truth_bits.shape)}")
    return (pred_bits.round() != truth_bits.round()).to(torch.float64).mean(dim=-1)


def batch_miou(pred: torch.Tensor, truth: torch.Tensor) -> torch.Tensor:
    """Per-row two-class MIoU for (B, T) probability / 0-1 tensors."""
    if pred.shape != truth.shape:
        raise MaskMismatchError(f"mask tensors differ: {tuple(pred.shape)} vs {tuple(truth.shape)}")
    p = pred >= 0.5
    t = truth >= 0.5

    def iou(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
        inter = (a & b).sum(dim=-1).to(torch.float64)
        union = (a | b).sum(dim=-1).to(torch.float64)
        return torch.where(union > 0, inter / union.clamp_min(1), torch.ones_like(union))

    return (iou(p, t) + iou(~p, ~t)) / 2


def tpr_fpr(
    scores: Sequence[float],
    labels: Sequence[bool | int],
    threshold: float = 0.5,
    require: Collection[str] = ("tpr", "fpr"),
) -> tuple[float, float]:
    """
    (TPR, FPR) with a detection meaning score ≥ threshold.

    A rate whose class is absent is NaN; requesting it through `require`
    raises instead.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape:
        raise ShapeMismatchError(f"{s.size} scores vs {y.size} labels")
    if isinstance(require, str):
        require = (require,)
    unknown = set(require) - {"tpr", "fpr"}
    if unknown:
        raise ParameterRangeError(f"unknown rate(s) {sorted(unknown)}; expected 'tpr' or 'fpr'")
    if "tpr" in require and not y.any():
        raise ParameterRangeError("TPR needs at least one watermarked example")
    if "fpr" in require and y.all():
        raise ParameterRangeError("FPR needs at least one clean example")
    detected = s >= threshold
    tpr = float(detected[y].mean()) if y.any() else math.nan
    fpr = float(detected[~y].mean()) if not y.all() else math.nan
    return tpr, fpr


def sisnr(reference: AudioClip | np.ndarray, estimate: AudioClip | np.ndarray) -> float:
    """Scale-invariant SNR in dB, capped to ±100."""
    ref = np.asarray(getattr(reference, "samples", reference), dtype=np.float64)
    est = np.asarray(getattr(estimate, "samples", estimate), dtype=np.float64)
    if ref.shape != est.shape:
        raise ShapeMismatchError(f"lengths differ: {ref.shape} vs {est.shape}")
    ref_energy = float(np.dot(ref, ref))
    if ref_energy == 0.0:
        raise ParameterRangeError("SI-SNR reference is all zeros")

    target = (np.dot(est, ref) / ref_energy) * ref
    residual = est - target
    target_energy = float(np.dot(target, target))
    residual_energy = float(np.dot(residual, residual))
    if residual_energy == 0.0:
        return SISNR_CAP_DB
    if target_energy == 0.0:
        return -SISNR_CAP_DB
    value = 10.0 * math.log10(target_energy / residual_energy)
    return float(min(SISNR_CAP_DB, max(-SISNR_CAP_DB, value)))
