"""
core/models.py

Value types shared by every stage: AudioClip, MessageBits, PresenceMask
and the seeded RandomSource.

AudioClip / MessageBits / PresenceMask are frozen after construction
(arrays are flagged read-only) so they can be shared across workers.
RandomSource is single-owner; parallel consumers get children via spawn().
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
import torch

from ..errors import MaskMismatchError, MessageFormatError, WaveVerifyError


# ---------------------------------------------------------------------------
# AudioClip
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AudioClip:
    """Mono waveform in the real amplitude domain (nominally [-1, 1])."""

    samples: np.ndarray
    """1-D float32 array. Read-only after construction."""

    sample_rate: int = 16_000
    """Hz."""

    def __post_init__(self) -> None:
        arr = np.asarray(self.samples, dtype=np.float32)
        if arr.ndim != 1:
            raise WaveVerifyError(f"AudioClip must be mono 1-D, got shape {arr.shape}")
        if arr.size < 1:
            raise WaveVerifyError("AudioClip must contain at least one sample")
        if not np.all(np.isfinite(arr)):
            raise WaveVerifyError("AudioClip samples must be finite")
        if int(self.sample_rate) < 1:
            raise WaveVerifyError(f"sample_rate must be positive, got {self.sample_rate}")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @classmethod
    def from_tensor(cls, wave: torch.Tensor, sample_rate: int) -> "AudioClip":
        return cls(wave.detach().reshape(-1).to(torch.float32).cpu().numpy(), sample_rate)

    def to_tensor(self, dtype: torch.dtype = torch.float32) -> torch.Tensor:
        return torch.from_numpy(self.samples.copy()).to(dtype)

    @property
    def num_samples(self) -> int:
        return int(self.samples.shape[0])

    @property
    def duration_seconds(self) -> float:
        return self.num_samples / self.sample_rate

    def __len__(self) -> int:
        return self.num_samples

    def __repr__(self) -> str:
        return f"AudioClip({self.num_samples} samples @ {self.sample_rate} Hz)"


# ---------------------------------------------------------------------------
# MessageBits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MessageBits:
    """Ordered n-bit watermark payload."""

    bits: tuple[int, ...]

    def __post_init__(self) -> None:
        bits = tuple(int(b) for b in self.bits)
        if len(bits) < 1:
            raise MessageFormatError("message must have at least one bit")
        if any(b not in (0, 1) for b in bits):
            raise MessageFormatError(f"message bits must be 0/1, got {bits}")
        object.__setattr__(self, "bits", bits)

    @property
    def n(self) -> int:
        return len(self.bits)

    @classmethod
    def random(cls, n: int, rng: "RandomSource") -> "MessageBits":
        return cls(tuple(int(b) for b in rng.integers(0, 2, size=n)))

    def to_hex(self) -> str:
        """MSB-first hex; the final nibble is zero-padded on the right."""
        padded = list(self.bits) + [0] * (-self.n % 4)
        digits = []
        for i in range(0, len(padded), 4):
            nibble = padded[i] << 3 | padded[i + 1] << 2 | padded[i + 2] << 1 | padded[i + 3]
            digits.append(f"{nibble:X}")
        return "".join(digits)

    def to_tensor(self, dtype: torch.dtype = torch.float32) -> torch.Tensor:
        return torch.tensor(self.bits, dtype=dtype)

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"MessageBits({''.join(map(str, self.bits))})"


# ---------------------------------------------------------------------------
# PresenceMask
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PresenceMask:
    """Per-sample watermark presence, either ground truth (hard) or predicted."""

    values: np.ndarray
    hard: bool = True

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float32).reshape(-1)
        if arr.size < 1:
            raise MaskMismatchError("mask must contain at least one value")
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise MaskMismatchError("mask values must lie in [0, 1]")
        if self.hard and not np.all((arr == 0.0) | (arr == 1.0)):
            raise MaskMismatchError("hard mask must contain only 0/1")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @classmethod
    def from_tensor(cls, values: torch.Tensor, hard: bool) -> "PresenceMask":
        return cls(values.detach().reshape(-1).to(torch.float32).cpu().numpy(), hard=hard)

    def to_tensor(self, dtype: torch.dtype = torch.float32) -> torch.Tensor:
        return torch.from_numpy(self.values.copy()).to(dtype)

    def binarize(self, threshold: float = 0.5) -> "PresenceMask":
        return PresenceMask((self.values >= threshold).astype(np.float32), hard=True)

    def check_paired(self, clip: AudioClip) -> "PresenceMask":
        """Raise unless this mask has exactly the clip's length."""
        if len(self) != clip.num_samples:
            raise MaskMismatchError(
                f"mask length {len(self)} != clip length {clip.num_samples}"
            )
        return self

    def to_json_list(self) -> list:
        if self.hard:
            return [int(v) for v in self.values]
        return [float(v) for v in self.values]

    def __len__(self) -> int:
        return int(self.values.shape[0])

    def __repr__(self) -> str:
        kind = "hard" if self.hard else "soft"
        return f"PresenceMask({len(self)} {kind}, mean={float(self.values.mean()):.3f})"


# ---------------------------------------------------------------------------
# RandomSource
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class RandomSource:
    """
    Seeded, reproducible draw stream (numpy PCG64).

    Identical seeds give identical draw sequences. Children from spawn()
    are independent streams derived from the parent seed.
    """

    seed: int
    _gen: np.random.Generator = field(init=False, repr=False)
    _spawned: int = field(default=0, init=False, repr=False)

    def __post_init__(self) -> None:
        self.seed = int(self.seed) & 0xFFFF_FFFF_FFFF_FFFF
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    # -- draws ---------------------------------------------------------------

    def uniform(self, low: float = 0.0, high: float = 1.0, size: Any = None):
        return self._gen.uniform(low, high, size)

    def integers(self, low: int, high: int | None = None, size: Any = None):
        return self._gen.integers(low, high, size)

    def normal(self, size: Any = None, scale: float = 1.0):
        return self._gen.normal(0.0, scale, size)

    def choice(self, options: int | Sequence, size: Any = None, replace: bool = True, p=None):
        return self._gen.choice(options, size=size, replace=replace, p=p)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def normal_tensor(
        self,
        shape: Sequence[int],
        dtype: torch.dtype = torch.float32,
        device: torch.device | str | None = None,
    ) -> torch.Tensor:
        """Standard-normal tensor drawn from this stream (not torch's global RNG)."""
        values = self._gen.standard_normal(tuple(shape))
        return torch.from_numpy(values).to(dtype=dtype, device=device)

    # -- children / persistence ---------------------------------------------

    def spawn(self, n: int) -> list["RandomSource"]:
        """Independent child streams; repeated calls yield fresh children."""
        base = np.random.SeedSequence(self.seed, spawn_key=(self._spawned,))
        self._spawned += 1
        return [
            RandomSource(int(child.generate_state(1, dtype=np.uint64)[0]))
            for child in base.spawn(n)
        ]

    def get_state(self) -> dict:
        return {
            "seed": self.seed,
            "spawned": self._spawned,
            "bit_generator": self._gen.bit_generator.state,
        }

    @classmethod
    def from_state(cls, state: dict) -> "RandomSource":
        rng = cls(int(state["seed"]))
        rng._spawned = int(state.get("spawned", 0))
        rng._gen.bit_generator.state = state["bit_generator"]
        return rng


def ceil_fraction(fraction: float, count: int) -> int:
    """⌈fraction·count⌉ robust to float noise such as 0.2*15 = 3.0000000000000004."""
    return int(math.ceil(round(fraction * count, 9)))
