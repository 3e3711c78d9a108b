"""
training/corpus.py

Speech corpus with stratified batch sampling.

A corpus is one or more pools, each a directory of WAV files (or the
built-in synthetic "toy" pool), with mixing weights that sum to 1. Every
batch draws its per-pool item counts from the weights (floor allocation,
remainder drawn by weight), then random fixed-length crops inside each pool.

Each pool holds back a deterministic validation split.

The toy pool synthesizes speech-like clips: a glottal pulse train with a
wandering pitch (90 to 250 Hz), three formant resonances and a ~4 Hz
syllabic envelope. It needs no data download and is fully determined by
the seed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..core.audio_io import load_wav
from ..core.models import RandomSource
from ..effects.builtin.filters import butterworth4
from ..errors import ConfigError, WaveVerifyError

logger = logging.getLogger(__name__)

TOY = "toy"
_FORMANTS_HZ = ((500.0, 1500.0, 2500.0), (700.0, 1200.0, 2600.0), (300.0, 2200.0, 3000.0), (450.0, 900.0, 2400.0))


class PoolSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    source: str                      # directory path or "toy"
    weight: float = Field(1.0, gt=0)


class CorpusSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    pools: tuple[PoolSpec, ...] = (PoolSpec(source=TOY),)
    sample_rate: int = Field(16_000, ge=1)
    clip_seconds: float = Field(0.5, gt=0)
    toy_clips: int = Field(50, ge=1)
    validation_clips: int = Field(8, ge=0)
    seed: int = 0

    @model_validator(mode="after")
    def _weights_sum_to_one(self) -> "CorpusSpec":
        if not self.pools:
            raise ValueError("corpus needs at least one pool")
        total = sum(p.weight for p in self.pools)
        if not math.isclose(total, 1.0, abs_tol=1e-6):
            raise ValueError(f"pool weights must sum to 1, got {total:.6f}")
        return self

    @property
    def clip_samples(self) -> int:
        return int(round(self.clip_seconds * self.sample_rate))

    @classmethod
    def parse(cls, text: str, **kwargs) -> "CorpusSpec":
        """'toy' or 'dirA:0.4,dirB:0.3,...' (weight defaults to an equal share)."""
        entries = [part.strip() for part in text.split(",") if part.strip()]
        if not entries:
            raise ConfigError("empty corpus specification")
        pools = []
        for entry in entries:
            source, sep, weight = entry.rpartition(":")
            if not sep or not _is_number(weight):
                source, weight = entry, str(1.0 / len(entries))
            pools.append(PoolSpec(source=source, weight=float(weight)))
        try:
            return cls(pools=tuple(pools), **kwargs)
        except ValueError as exc:
            raise ConfigError(f"invalid corpus {text!r}: {exc}") from exc


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


# ---------------------------------------------------------------------------
# Toy speech
# ---------------------------------------------------------------------------

def toy_clip(length: int, sample_rate: int, rng: RandomSource) -> torch.Tensor:
    """One synthetic voiced-speech clip of length samples, peak 0.5."""
    t = np.arange(length) / sample_rate
    f0 = rng.uniform(90.0, 250.0) * (1.0 + 0.08 * np.sin(2 * np.pi * rng.uniform(0.5, 2.0) * t))
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate
    pulses = np.sign(np.sin(phase)) * np.abs(np.sin(phase)) ** 8

    source = torch.from_numpy(pulses + 0.02 * rng.normal(size=length))
    formants = _FORMANTS_HZ[int(rng.integers(0, len(_FORMANTS_HZ)))]
    voiced = torch.zeros(length, dtype=torch.float64)
    for gain, centre in zip((1.0, 0.5, 0.25), formants):
        band = butterworth4(source, sample_rate, centre * 0.8, "highpass")
        voiced = voiced + gain * butterworth4(band, sample_rate, min(centre * 1.2, 0.45 * sample_rate), "lowpass")

    rate = rng.uniform(3.0, 5.0)
    envelope = 0.5 * (1 - np.cos(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi)))
    wave = voiced.numpy() * envelope
    peak = float(np.max(np.abs(wave))) or 1.0
    return torch.from_numpy((0.5 * wave / peak).astype(np.float32))


def toy_clips(count: int, length: int, sample_rate: int = 16_000, seed: int = 0) -> list[torch.Tensor]:
    rng = RandomSource(seed)
    return [toy_clip(length, sample_rate, rng) for _ in range(count)]


# ---------------------------------------------------------------------------
# Corpus
# ---------------------------------------------------------------------------

@dataclass
class Pool:
    name: str
    weight: float
    train: list[torch.Tensor] = field(default_factory=list)
    validation: list[torch.Tensor] = field(default_factory=list)


class Corpus:
    def __init__(self, spec: CorpusSpec | None = None) -> None:
        self.spec = spec = spec or CorpusSpec()
        self.pools = [self._load_pool(p) for p in spec.pools]
        empty = [p.name for p in self.pools if not p.train]
        if empty:
            raise ConfigError(f"corpus pool(s) without training clips: {empty}")
        self.stats: dict[str, int] = {"batches": 0, "items": 0}
        logger.info(
            "Corpus ready: %s",
            ", ".join(f"{p.name} ({len(p.train)} train / {len(p.validation)} val, w={p.weight:g})" for p in self.pools),
        )

    def _load_pool(self, pool: PoolSpec) -> Pool:
        length = self.spec.clip_samples
        if pool.source == TOY:
            clips = toy_clips(self.spec.toy_clips + self.spec.validation_clips, length,
                              self.spec.sample_rate, self.spec.seed)
        else:
            clips = self._load_directory(Path(pool.source), length)
        n_val = min(self.spec.validation_clips, max(0, len(clips) - 1))
        return Pool(pool.source, pool.weight, clips[: len(clips) - n_val], clips[len(clips) - n_val:])

    def _load_directory(self, directory: Path, length: int) -> list[torch.Tensor]:
        if not directory.is_dir():
            raise ConfigError(f"corpus directory not found: {directory}")
        clips: list[torch.Tensor] = []
        for path in sorted(directory.rglob("*.wav")):
            try:
                clip = load_wav(path, self.spec.sample_rate, resample=True, downmix=True)
            except (WaveVerifyError, OSError) as exc:
                logger.warning("Skipping %s: %s", path, exc)
                continue
            wave = clip.to_tensor()
            if wave.shape[0] < length:
                wave = torch.nn.functional.pad(wave, (0, length - wave.shape[0]))
            clips.append(wave)
        logger.debug("Loaded %d clip(s) from %s", len(clips), directory)
        return clips

    # -- sampling ------------------------------------------------------------

    def pool_counts(self, batch_size: int, rng: RandomSource) -> list[int]:
        weights = np.array([p.weight for p in self.pools])
        counts = np.floor(weights * batch_size).astype(int)
        remainder = batch_size - int(counts.sum())
        if remainder:
            extra = rng.choice(len(self.pools), size=remainder, p=weights / weights.sum())
            for index in extra:
                counts[int(index)] += 1
        return counts.tolist()

    def _crop(self, wave: torch.Tensor, rng: RandomSource) -> torch.Tensor:
        length = self.spec.clip_samples
        offset = int(rng.integers(0, wave.shape[0] - length + 1))
        return wave[offset: offset + length]

    def sample_batch(self, batch_size: int, rng: RandomSource) -> torch.Tensor:
        """(batch_size, clip_samples) float32 crops, stratified across pools."""
        items: list[torch.Tensor] = []
        for pool, count in zip(self.pools, self.pool_counts(batch_size, rng)):
            for _ in range(count):
                items.append(self._crop(pool.train[int(rng.integers(0, len(pool.train)))], rng))
        order = rng.permutation(len(items))
        self.stats["batches"] += 1
        self.stats["items"] += len(items)
        return torch.stack([items[int(i)] for i in order])

    def validation_batch(self) -> torch.Tensor:
        length = self.spec.clip_samples
        clips = [c[:length] for p in self.pools for c in p.validation]
        if not clips:
            clips = [p.train[0][:length] for p in self.pools]
        return torch.stack(clips)

    def babble_pool(self, limit: int = 32) -> list[torch.Tensor]:
        return [clip for pool in self.pools for clip in pool.train][:limit]

    def __len__(self) -> int:
        return sum(len(p.train) for p in self.pools)
