"""
waveverify/errors.py

Exception hierarchy shared by every sub-package.

Each error also derives from the closest builtin so callers that only know
about ValueError / RuntimeError / FileNotFoundError keep working.
The CLI maps any WaveVerifyError to exit code 1.
"""

from __future__ import annotations


class WaveVerifyError(Exception):
    """Base class for all waveverify errors."""


class ConfigError(WaveVerifyError, ValueError):
    """Invalid or unreadable configuration."""


class AudioFormatError(WaveVerifyError, ValueError):
    """WAV file is not PCM, has the wrong rate, or the wrong channel count."""


class AudioFileNotFoundError(WaveVerifyError, FileNotFoundError):
    """Input audio file does not exist."""


class MessageFormatError(WaveVerifyError, ValueError):
    """Hex payload is malformed or too short."""


class MaskMismatchError(WaveVerifyError, ValueError):
    """A presence mask is paired with a clip of a different length."""


class ShapeMismatchError(WaveVerifyError, ValueError):
    """Tensor shapes disagree (FiLM channels, expert outputs, metric inputs)."""


class ClipTooShortError(WaveVerifyError, ValueError):
    """Clip is shorter than the operation's minimum length."""


class UnknownEffectError(WaveVerifyError, KeyError):
    """Effect name is not registered."""

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class ParameterRangeError(WaveVerifyError, ValueError):
    """Effect parameter missing or outside its legal range."""


class CodecUnavailableError(WaveVerifyError, RuntimeError):
    """External codec executable is not configured or not runnable."""


class CheckpointFormatError(WaveVerifyError, ValueError):
    """Checkpoint file is unreadable, truncated, incomplete or of an unknown version."""


class NonFiniteLossError(WaveVerifyError, RuntimeError):
    """A training loss or parameter became NaN or Inf; carries a diagnostic snapshot."""

    def __init__(self, message: str, snapshot: dict | None = None) -> None:
        super().__init__(message)
        self.snapshot = snapshot or {}
