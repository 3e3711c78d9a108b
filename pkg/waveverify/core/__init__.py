"""
core/__init__.py

Public API for the core sub-package.
"""

from .audio_io import load_mask_json, load_wav, message_from_hex, save_mask_json, save_wav
from .masks import mask_full, pool_mask_to_frames, resample_mask
from .models import AudioClip, MessageBits, PresenceMask, RandomSource

__all__ = [
    "AudioClip",
    "MessageBits",
    "PresenceMask",
    "RandomSource",
    "load_wav",
    "save_wav",
    "message_from_hex",
    "mask_full",
    "resample_mask",
    "pool_mask_to_frames",
    "save_mask_json",
    "load_mask_json",
]
