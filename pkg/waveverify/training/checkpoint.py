"""
training/checkpoint.py

Versioned checkpoint file.

A checkpoint is one torch archive holding a plain payload dict:

    format_version   int, currently 1
    configs          training / generator / detector / locator / discriminator
    models           state dicts keyed by network name
    optimizers       AdamW state dicts
    lr_schedulers    ExponentialLR state dicts
    scheduler_state  effect scheduler state (SchedulerState.to_dict)
    rng_state        RandomSource state
    iteration, history, best

The payload is normalized to plain dicts, lists, tuples, scalars and compact
CPU tensors before writing, and archives are always serialized in memory under
the same record name, so save → load → save yields identical bytes whatever
the file is called. Files are read back with torch.load(weights_only=True).
"""

from __future__ import annotations

import io
import logging
import os
import pickle
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import torch

from ..errors import CheckpointFormatError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
_FIELDS = (
    "configs", "models", "optimizers", "lr_schedulers", "scheduler_state",
    "rng_state", "iteration", "history", "best",
)


@dataclass
class Checkpoint:
    configs: dict[str, dict]
    """training / generator / detector / locator / discriminator config dicts."""

    models: dict[str, dict[str, torch.Tensor]]
    """State dicts keyed by network name."""

    optimizers: dict[str, Any] = field(default_factory=dict)
    lr_schedulers: dict[str, Any] = field(default_factory=dict)
    scheduler_state: dict = field(default_factory=dict)
    rng_state: dict = field(default_factory=dict)
    iteration: int = 0
    history: list[dict] = field(default_factory=list)
    best: dict = field(default_factory=dict)

    def to_payload(self) -> dict:
        payload = {"format_version": FORMAT_VERSION}
        payload.update({name: getattr(self, name) for name in _FIELDS})
        return _normalize(payload)

    @classmethod
    def from_payload(cls, payload: Any) -> "Checkpoint":
        if not isinstance(payload, dict) or "format_version" not in payload:
            raise CheckpointFormatError("checkpoint payload has no format_version")
        version = payload["format_version"]
        if version != FORMAT_VERSION:
            raise CheckpointFormatError(f"unsupported checkpoint version {version} (expected {FORMAT_VERSION})")
        missing = [name for name in _FIELDS if name not in payload]
        if missing:
            raise CheckpointFormatError(f"checkpoint is missing fields {missing}")
        return cls(**{name: payload[name] for name in _FIELDS})


def _normalize(value: Any) -> Any:
    """Reduce value to what torch.load(weights_only=True) reads back unchanged."""
    if isinstance(value, torch.Tensor):
        return value.detach().cpu().clone().contiguous()
    if isinstance(value, dict):
        return {k: _normalize(v) for k, v in value.items()}
    if isinstance(value, tuple):
        return tuple(_normalize(v) for v in value)
    if isinstance(value, list):
        return [_normalize(v) for v in value]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if value is None or isinstance(value, (bool, int, float, str)):
        return value
    raise CheckpointFormatError(f"cannot store value of type {type(value).__name__} in a checkpoint")


# ---------------------------------------------------------------------------
# Bytes / files
# ---------------------------------------------------------------------------

def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    buffer = io.BytesIO()
    torch.save(checkpoint.to_payload(), buffer)
    return buffer.getvalue()


def decode_checkpoint(data: bytes) -> Checkpoint:
    try:
        payload = torch.load(io.BytesIO(data), map_location="cpu", weights_only=True)
    except (RuntimeError, pickle.UnpicklingError, EOFError, ValueError, KeyError, OSError, zipfile.BadZipFile) as exc:
        raise CheckpointFormatError(f"not a readable checkpoint archive (corrupt or truncated): {exc}") from exc
    return Checkpoint.from_payload(payload)


def save_checkpoint(checkpoint: Checkpoint, path: str | os.PathLike) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = encode_checkpoint(checkpoint)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)
    logger.info("Saved checkpoint %s (iteration %d, %.1f KiB)", path, checkpoint.iteration, len(data) / 1024)


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise CheckpointFormatError(f"checkpoint not found: {path}")
    return decode_checkpoint(path.read_bytes())
