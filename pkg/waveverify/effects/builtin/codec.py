"""
effects/builtin/codec.py

Lossy-codec attack (MP3/AAC) delegated to an external encoder.

The command comes from settings.EXTERNAL_CODEC_COMMAND with placeholders
{input} (16-bit WAV written here), {output} (encoded file the command must
produce, extension EXTERNAL_CODEC_FORMAT) and {bitrate} (kbps). The encoded
file is decoded back with soundfile, resampled if needed and trimmed/padded
to the input length. Gradient is straight-through.
"""

from __future__ import annotations

import logging
import shlex
import subprocess
import tempfile
from pathlib import Path
from typing import Mapping

import numpy as np
import soundfile as sf
import torch
import torchaudio.functional as AF

from ...config import settings
from ...errors import CodecUnavailableError
from ..base import BaseEffect, EffectContext, EffectId, ParamSpec
from .resampling import fit_length

logger = logging.getLogger(__name__)


def run_codec(samples: np.ndarray, sample_rate: int, bitrate_kbps: int) -> np.ndarray:
    """Encode + decode one mono float clip through the configured command."""
    template = settings.EXTERNAL_CODEC_COMMAND.strip()
    if not template:
        raise CodecUnavailableError(
            "external_codec requires WAVEVERIFY_EXTERNAL_CODEC_COMMAND to be set"
        )
    with tempfile.TemporaryDirectory(prefix="waveverify-codec-") as tmp:
        src = Path(tmp) / "input.wav"
        dst = Path(tmp) / f"output.{settings.EXTERNAL_CODEC_FORMAT}"
        sf.write(str(src), np.clip(samples, -1.0, 32767 / 32768), sample_rate, subtype="PCM_16")
        argv = [
            part.format(input=src, output=dst, bitrate=bitrate_kbps)
            for part in shlex.split(template)
        ]
        try:
            proc = subprocess.run(
                argv,
                capture_output=True,
                timeout=settings.EXTERNAL_CODEC_TIMEOUT_SECONDS,
                check=False,
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise CodecUnavailableError(f"external codec failed to run: {exc}") from exc
        if proc.returncode != 0 or not dst.is_file():
            stderr = proc.stderr.decode(errors="replace").strip().splitlines()
            raise CodecUnavailableError(
                f"external codec exited with {proc.returncode}: {stderr[-1] if stderr else 'no output'}"
            )
        try:
            decoded, rate = sf.read(str(dst), dtype="float32", always_2d=True)
        except RuntimeError as exc:
            raise CodecUnavailableError(f"cannot decode codec output {dst.name}: {exc}") from exc

    mono = torch.from_numpy(decoded.mean(axis=1))
    if rate != sample_rate:
        mono = AF.resample(mono, orig_freq=rate, new_freq=sample_rate)
    return fit_length(mono, samples.shape[-1]).numpy()


class ExternalCodecEffect(BaseEffect):
    name = EffectId.EXTERNAL_CODEC.value
    param_specs = (ParamSpec("bitrate_kbps", choices=(64.0, 96.0, 128.0)),)
    differentiable = False

    def available(self) -> bool:
        return bool(settings.EXTERNAL_CODEC_COMMAND.strip())

    def apply(self, wave: torch.Tensor, params: Mapping[str, float], ctx: EffectContext) -> torch.Tensor:
        bitrate = int(params["bitrate_kbps"])
        rows = wave.detach().reshape(-1, wave.shape[-1]).cpu().numpy()
        coded = np.stack([run_codec(row, ctx.sample_rate, bitrate) for row in rows])
        logger.debug("Coded %d row(s) at %d kbps", len(rows), bitrate)
        return torch.from_numpy(coded).to(dtype=wave.dtype, device=wave.device).reshape(wave.shape)
