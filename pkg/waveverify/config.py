"""
waveverify/config.py

Process-wide settings via Pydantic Settings.
All values can be overridden with WAVEVERIFY_* environment variables or a .env file.

Quick start: create a .env file in your project root:
    WAVEVERIFY_LOG_LEVEL=DEBUG
    WAVEVERIFY_EXTERNAL_CODEC_COMMAND=ffmpeg -y -loglevel error -i {input} -b:a {bitrate}k {output}
    WAVEVERIFY_EXTERNAL_CODEC_FORMAT=mp3

Training runs are configured separately (see training/config.py) from a flat
key=value file so a run is fully described by one file.
"""

from __future__ import annotations

from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="WAVEVERIFY_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Audio
    SAMPLE_RATE: int = 16_000
    N_BITS: int = 16

    # Runtime
    DEVICE: str = "cpu"
    NUM_THREADS: int = 0          # 0 = leave torch's default

    # External codec (MP3/AAC attacks). Empty command = effect disabled.
    # Placeholders: {input} {output} {bitrate}
    EXTERNAL_CODEC_COMMAND: str = ""
    EXTERNAL_CODEC_FORMAT: str = "mp3"
    EXTERNAL_CODEC_TIMEOUT_SECONDS: int = 60

    # Babble noise
    BABBLE_TALKERS: int = 6

    # Effects disabled everywhere (e.g. external_codec on machines without ffmpeg)
    DISABLED_EFFECTS: list[str] = []

    # Checkpoints
    CHECKPOINT_NAME: str = "best.ckpt"

    # Logging
    LOG_LEVEL: str = "INFO"

    @field_validator("DISABLED_EFFECTS", mode="before")
    @classmethod
    def parse_effect_list(cls, v):
        if isinstance(v, str):
            import json as _json
            v = v.strip()
            if v.startswith("["):
                try:
                    return _json.loads(v)
                except Exception:
                    pass
            return [name.strip() for name in v.split(",") if name.strip()]
        return v

    @field_validator("SAMPLE_RATE", "N_BITS")
    @classmethod
    def must_be_positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError("must be >= 1")
        return v


settings = Settings()
