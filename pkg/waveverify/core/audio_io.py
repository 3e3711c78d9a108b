"""
core/audio_io.py

File-boundary helpers: PCM WAV in/out, hex payloads, mask JSON.

Quantization only happens here; everything inside the package works on
real-valued samples. 16-bit codes map to [-1, 1) by division by 32768.
"""

from __future__ import annotations

import json
import logging
import os
import string
from pathlib import Path

import numpy as np
import soundfile as sf
import torch
import torchaudio.functional as AF

from ..errors import AudioFileNotFoundError, AudioFormatError, MessageFormatError
from .models import AudioClip, MessageBits, PresenceMask

logger = logging.getLogger(__name__)

_PCM_SUBTYPES = frozenset({"PCM_16", "PCM_24", "PCM_32", "PCM_S8", "PCM_U8"})
_WAV_FORMATS = frozenset({"WAV", "WAVEX"})
_INT16_SCALE = 32768.0
_MAX_CODE = 32767


# ---------------------------------------------------------------------------
# WAV
# ---------------------------------------------------------------------------

def load_wav(
    path: str | os.PathLike,
    expected_rate: int = 16_000,
    resample: bool = False,
    downmix: bool = False,
) -> AudioClip:
    """
    Read a PCM WAV file into a mono AudioClip at expected_rate.

    Args:
        resample: Convert other rates instead of rejecting them.
        downmix:  Average multichannel input instead of rejecting it.
    """
    path = Path(path)
    if not path.is_file():
        raise AudioFileNotFoundError(f"audio file not found: {path}")

    try:
        info = sf.info(str(path))
    except RuntimeError as exc:
        raise AudioFormatError(f"{path}: unreadable audio ({exc})") from exc

    if info.format not in _WAV_FORMATS or info.subtype not in _PCM_SUBTYPES:
        raise AudioFormatError(
            f"{path}: expected PCM WAV, got format={info.format} subtype={info.subtype}"
        )
    if info.channels > 1 and not downmix:
        raise AudioFormatError(
            f"{path}: {info.channels} channels; pass downmix=True to average them"
        )
    if info.samplerate != expected_rate and not resample:
        raise AudioFormatError(
            f"{path}: sample rate {info.samplerate} Hz != expected {expected_rate} Hz"
        )

    data, rate = sf.read(str(path), dtype="float32", always_2d=True)
    samples = data.mean(axis=1) if data.shape[1] > 1 else data[:, 0]

    if rate != expected_rate:
        logger.debug("Resampling %s from %d Hz to %d Hz", path, rate, expected_rate)
        wave = torch.from_numpy(np.ascontiguousarray(samples))
        samples = AF.resample(wave, orig_freq=rate, new_freq=expected_rate).numpy()

    if samples.size == 0:
        raise AudioFormatError(f"{path}: file contains no samples")
    return AudioClip(samples, expected_rate)


def save_wav(clip: AudioClip, path: str | os.PathLike) -> None:
    """Write a 16-bit PCM mono WAV. Samples are clamped to [-1, 1 - 1/32768]."""
    path = Path(path)
    codes = np.round(np.clip(clip.samples.astype(np.float64), -1.0, _MAX_CODE / _INT16_SCALE) * _INT16_SCALE)
    codes = np.clip(codes, -_INT16_SCALE, _MAX_CODE).astype(np.int16)
    try:
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
        sf.write(str(path), codes, clip.sample_rate, subtype="PCM_16", format="WAV")
    except (OSError, RuntimeError) as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    logger.debug("Wrote %r to %s", clip, path)


# ---------------------------------------------------------------------------
# Payloads
# ---------------------------------------------------------------------------

def message_from_hex(text: str, n: int) -> MessageBits:
    """MSB-first extraction of exactly n bits from a hex string."""
    digits = text.strip()
    if digits[:2].lower() == "0x":
        digits = digits[2:]
    if not digits or any(ch not in string.hexdigits for ch in digits):
        raise MessageFormatError(f"not a hex string: {text!r}")
    if n < 1:
        raise MessageFormatError(f"bit count must be >= 1, got {n}")
    if len(digits) * 4 < n:
        raise MessageFormatError(
            f"hex string {text!r} carries {len(digits) * 4} bits, {n} requested"
        )
    bits: list[int] = []
    for ch in digits:
        value = int(ch, 16)
        bits.extend((value >> shift) & 1 for shift in (3, 2, 1, 0))
    return MessageBits(tuple(bits[:n]))


# ---------------------------------------------------------------------------
# Masks
# ---------------------------------------------------------------------------

def save_mask_json(mask: PresenceMask, path: str | os.PathLike) -> None:
    Path(path).write_text(json.dumps(mask.to_json_list()), encoding="utf-8")


def load_mask_json(path: str | os.PathLike) -> PresenceMask:
    values = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(values, list):
        raise MessageFormatError(f"{path}: mask JSON must be an array")
    arr = np.asarray(values, dtype=np.float32)
    hard = bool(np.all((arr == 0.0) | (arr == 1.0)))
    return PresenceMask(arr, hard=hard)
