"""
training/config.py

Training run configuration.

A run is described by one flat key=value file (parsed with python-dotenv,
comments and quoting allowed), for example:

    # run.cfg
    seed=7
    total_iters=5000
    batch_size=8
    generator_channels=16,32,48,64
    corpus=toy
    augment=false

Keys are case-insensitive. Unknown keys are rejected. The nested configs
consumed by the networks, losses, scheduler and corpus are derived from the
flat fields through the *_config() helpers.
"""

from __future__ import annotations

import logging
import os
from pathlib import Path

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..config import settings
from ..effects.temporal import TemporalAugSpec
from ..errors import ConfigError
from ..losses.losses import LossWeights, StftSpec
from ..networks.detector import DetectorConfig
from ..networks.discriminator import DiscriminatorConfig
from ..networks.generator import GeneratorConfig, parse_channels
from ..networks.locator import LocatorConfig
from ..scheduler.models import SchedulerConfig

logger = logging.getLogger(__name__)


class TrainingConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)

    # Run
    seed: int = 0
    total_iters: int = Field(1000, ge=1)
    batch_size: int = Field(8, ge=1)
    variants: int = Field(2, ge=1)
    validation_interval: int = Field(100, ge=1)
    validation_clips: int = Field(8, ge=1)
    run_dir: str = "runs/default"
    device: str = settings.DEVICE

    # Data
    sample_rate: int = Field(settings.SAMPLE_RATE, ge=1)
    clip_seconds: float = Field(0.5, gt=0)
    corpus: str = "toy"                  # "toy" or "dir:weight,dir:weight"
    toy_clips: int = Field(50, ge=1)
    n_bits: int = Field(settings.N_BITS, ge=1)

    # Optimizer (generator side and discriminator share these)
    lr: float = Field(1e-4, gt=0)
    beta1: float = Field(0.8, ge=0, lt=1)
    beta2: float = Field(0.99, ge=0, lt=1)
    weight_decay: float = Field(0.0, ge=0)
    lr_decay: float = Field(0.999996, gt=0, lt=1)

    # Augmentation
    augment: bool = True
    effects: tuple[str, ...] = ()        # empty = every effect available here
    segment_prob: float = Field(0.5, ge=0, le=1)
    sequence_prob: float = Field(0.2, ge=0, le=1)
    segment_len_s: float = Field(0.1, gt=0)
    modify_fraction: float = Field(0.2, ge=0, le=1)
    shuffle_len_s: float = Field(0.5, gt=0)

    # Networks
    generator_channels: tuple[int, ...] = (32, 64, 96, 128)
    detector_channels: tuple[int, ...] = (32, 64, 96, 128)
    locator_channels: int = Field(64, ge=1)
    discriminator_channels: tuple[int, ...] = (16, 32, 64, 64)
    bands: int = Field(4, ge=1)
    residual_gain: float = Field(0.1, gt=0)
    gating: str = "clip"

    # Loss weights
    lambda_wave: float = Field(10.0, ge=0)
    lambda_spec: float = Field(1.0, ge=0)
    lambda_mel: float = Field(1.0, ge=0)
    lambda_det: float = Field(10.0, ge=0)
    lambda_loc: float = Field(5.0, ge=0)
    lambda_gen: float = Field(1.0, ge=0)
    lambda_feat: float = Field(2.0, ge=0)

    # Scheduler
    sched_temperature_initial: float = Field(1.0, gt=0)
    sched_temperature_final: float = Field(0.7, gt=0)
    sched_w1: float = 0.8
    sched_w2: float = 0.2
    sched_ema_beta: float = Field(0.9, gt=0, lt=1)
    sched_n_bins: int = Field(8, ge=1)
    sched_exploit_start: float = Field(0.5, ge=0, le=1)
    sched_anneal_fraction: float = Field(0.1, ge=0, le=1)

    @field_validator("generator_channels", "detector_channels", "discriminator_channels", mode="before")
    @classmethod
    def parse_channel_list(cls, v):
        return parse_channels(v)

    @field_validator("effects", mode="before")
    @classmethod
    def parse_effect_list(cls, v):
        if isinstance(v, str):
            return tuple(name.strip() for name in v.split(",") if name.strip())
        return v

    @model_validator(mode="after")
    def _check(self) -> "TrainingConfig":
        bad = [c for c in self.generator_channels if c % self.bands]
        if bad:
            raise ValueError(f"generator_channels {bad} not divisible by bands={self.bands}")
        if self.gating not in ("clip", "frame"):
            raise ValueError(f"gating must be 'clip' or 'frame', got {self.gating!r}")
        return self

    # -- derived configs ---------------------------------------------------

    @property
    def clip_samples(self) -> int:
        return int(round(self.clip_seconds * self.sample_rate))

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(
            n_bits=self.n_bits, channels=self.generator_channels,
            bands=self.bands, residual_gain=self.residual_gain,
        )

    def detector_config(self) -> DetectorConfig:
        return DetectorConfig(n_bits=self.n_bits, channels=self.detector_channels, gating=self.gating)

    def locator_config(self) -> LocatorConfig:
        return LocatorConfig(channels=self.locator_channels)

    def discriminator_config(self) -> DiscriminatorConfig:
        return DiscriminatorConfig(channels=self.discriminator_channels)

    def loss_weights(self) -> LossWeights:
        return LossWeights(
            wave=self.lambda_wave, spec=self.lambda_spec, mel=self.lambda_mel,
            det=self.lambda_det, loc=self.lambda_loc, gen=self.lambda_gen, feat=self.lambda_feat,
        )

    def stft_spec(self) -> StftSpec:
        return StftSpec(sample_rate=self.sample_rate)

    def scheduler_config(self) -> SchedulerConfig:
        return SchedulerConfig(
            temperature_initial=self.sched_temperature_initial,
            temperature_final=self.sched_temperature_final,
            w1=self.sched_w1,
            w2=self.sched_w2,
            ema_beta=self.sched_ema_beta,
            n_bins=self.sched_n_bins,
            exploit_start=self.sched_exploit_start,
            anneal_fraction=self.sched_anneal_fraction,
        )

    def temporal_spec(self) -> TemporalAugSpec:
        return TemporalAugSpec(
            segment_len_s=self.segment_len_s,
            modify_fraction=self.modify_fraction,
            shuffle_len_s=self.shuffle_len_s,
        )


def load_training_config(path: str | os.PathLike, **overrides) -> TrainingConfig:
    """Parse a flat key=value file; keyword overrides win over file values."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    raw = dotenv_values(path)
    values: dict = {}
    for key, value in raw.items():
        if value is None:
            raise ConfigError(f"{path}: key {key!r} has no value")
        values[key.strip().lower()] = value.strip()
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        config = TrainingConfig(**values)
    except ValidationError as exc:
        raise ConfigError(f"{path}: invalid training config\n{exc}") from exc
    logger.info("Loaded training config from %s (%d key(s) set)", path, len(values))
    return config
