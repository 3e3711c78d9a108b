"""
losses/losses.py

Training objectives.

reconstruction   λ_wave·L1(x, x̂) + λ_spec·Σ_w [L1(|S|) + L1(log|S|)] + λ_mel·Σ_w L1(log-mel)
                 over STFT windows w ∈ {512, 2048} (hop w/4), mel 80 / 150 bands
detection        −(1/N) Σ m·[y log p + (1−y) log(1−p)], N = all positions
localization     plain BCE over every sample
adversarial      least squares, generator side plus L1 feature matching
total            L_rec + L_adv + λ_det·mean_ε L_det + λ_loc·mean_ε L_loc

Probabilities are clamped to [1e-7, 1 − 1e-7] before the log.
"""

from __future__ import annotations

import logging
from functools import lru_cache
from typing import Sequence

import torch
import torchaudio.functional as AF
from pydantic import BaseModel, ConfigDict, Field

from ..core.models import AudioClip
from ..errors import ParameterRangeError, ShapeMismatchError
from ..networks.discriminator import DiscriminatorStack

logger = logging.getLogger(__name__)

BCE_EPS = 1e-7
_MAG_EPS = 1e-12
_LOG_FLOOR = 1e-5


class LossWeights(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)

    wave: float = Field(10.0, ge=0)
    spec: float = Field(1.0, ge=0)
    mel: float = Field(1.0, ge=0)
    det: float = Field(10.0, ge=0)
    loc: float = Field(5.0, ge=0)
    gen: float = Field(1.0, ge=0)
    feat: float = Field(2.0, ge=0)


class StftSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    windows: tuple[int, ...] = (512, 2048)
    mel_bands: tuple[int, ...] = (80, 150)
    sample_rate: int = Field(16_000, ge=1)

    def pairs(self) -> list[tuple[int, int, int]]:
        """(window, hop, mel bands) per resolution."""
        if len(self.windows) != len(self.mel_bands):
            raise ShapeMismatchError("one mel band count is needed per STFT window")
        return [(w, w // 4, m) for w, m in zip(self.windows, self.mel_bands)]


def _as_batch(value: AudioClip | torch.Tensor) -> torch.Tensor:
    if isinstance(value, AudioClip):
        return value.to_tensor(torch.float64).unsqueeze(0)
    return value if value.dim() > 1 else value.unsqueeze(0)


@lru_cache(maxsize=8)
def _mel_filters(n_fft: int, n_mels: int, sample_rate: int) -> torch.Tensor:
    return AF.melscale_fbanks(
        n_freqs=n_fft // 2 + 1,
        f_min=0.0,
        f_max=sample_rate / 2,
        n_mels=n_mels,
        sample_rate=sample_rate,
    )


def stft_magnitude(x: torch.Tensor, window: int, hop: int) -> torch.Tensor:
    """(B, T) → (B, F, frames) magnitude with a constant-padded centered STFT."""
    spec = torch.stft(
        x, window, hop_length=hop,
        window=torch.hann_window(window, dtype=x.dtype, device=x.device),
        center=True, pad_mode="constant", return_complex=True,
    )
    return torch.sqrt(spec.real.pow(2) + spec.imag.pow(2) + _MAG_EPS)


# ---------------------------------------------------------------------------
# Reconstruction
# ---------------------------------------------------------------------------

def loss_reconstruction(
    x: AudioClip | torch.Tensor,
    xhat: AudioClip | torch.Tensor,
    w: LossWeights | None = None,
    spec: StftSpec | None = None,
) -> torch.Tensor:
    w = w or LossWeights()
    spec = spec or StftSpec()
    x, xhat = _as_batch(x), _as_batch(xhat)
    if x.shape != xhat.shape:
        raise ShapeMismatchError(f"reconstruction inputs differ: {tuple(x.shape)} vs {tuple(xhat.shape)}")
    xhat = xhat.to(x.dtype)

    total = w.wave * (x - xhat).abs().mean()
    if w.spec == 0 and w.mel == 0:
        return total

    for window, hop, n_mels in spec.pairs():
        mag = stft_magnitude(x, window, hop)
        mag_hat = stft_magnitude(xhat, window, hop)
        if w.spec:
            linear = (mag - mag_hat).abs().mean()
            log = (torch.log(mag + _LOG_FLOOR) - torch.log(mag_hat + _LOG_FLOOR)).abs().mean()
            total = total + w.spec * (linear + log)
        if w.mel:
            fb = _mel_filters(window, n_mels, spec.sample_rate).to(dtype=x.dtype, device=x.device)
            mel = torch.matmul(mag.transpose(-1, -2), fb)
            mel_hat = torch.matmul(mag_hat.transpose(-1, -2), fb)
            total = total + w.mel * (torch.log(mel + _LOG_FLOOR) - torch.log(mel_hat + _LOG_FLOOR)).abs().mean()
    return total


# ---------------------------------------------------------------------------
# Detection / localization
# ---------------------------------------------------------------------------

def _check_probabilities(p: torch.Tensor, label: str) -> torch.Tensor:
    if not torch.isfinite(p).all() or p.min() < 0 or p.max() > 1:
        raise ParameterRangeError(f"{label} probabilities must lie in [0, 1]")
    return p.clamp(BCE_EPS, 1 - BCE_EPS)


def _bce(p: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    return -(target * torch.log(p) + (1 - target) * torch.log(1 - p))


def loss_detection(p_det: torch.Tensor, y: torch.Tensor, m: torch.Tensor) -> torch.Tensor:
    """
    Presence-masked detection BCE.

    p_det: (B, n_bits, T') per-frame probabilities
    y:     (B, n_bits) message bits, broadcast over frames
    m:     (B, T') frame-level presence mask
    """
    if p_det.dim() == 2:
        p_det, y, m = p_det.unsqueeze(0), y.unsqueeze(0), m.unsqueeze(0)
    if y.shape != p_det.shape[:2] or m.shape != (p_det.shape[0], p_det.shape[-1]):
        raise ShapeMismatchError(
            f"detection shapes disagree: p {tuple(p_det.shape)}, y {tuple(y.shape)}, m {tuple(m.shape)}"
        )
    p = _check_probabilities(p_det, "detector")
    target = y.to(p.dtype).unsqueeze(-1).expand_as(p)
    weights = m.to(p.dtype).unsqueeze(1)
    return (weights * _bce(p, target)).sum() / p.numel()


def loss_localization(p_loc: torch.Tensor, m: torch.Tensor) -> torch.Tensor:
    if p_loc.shape != m.shape:
        raise ShapeMismatchError(f"locator output {tuple(p_loc.shape)} vs mask {tuple(m.shape)}")
    p = _check_probabilities(p_loc, "locator")
    return _bce(p, m.to(p.dtype)).mean()


# ---------------------------------------------------------------------------
# Adversarial
# ---------------------------------------------------------------------------

def generator_adversarial(
    fake_scores: Sequence[torch.Tensor],
    real_features: Sequence[Sequence[torch.Tensor]],
    fake_features: Sequence[Sequence[torch.Tensor]],
    w: LossWeights,
) -> torch.Tensor:
    """λ_gen·mean_scales E[(1 − D(x̂))²] + λ_feat·Σ_layers mean|f(x) − f(x̂)|."""
    adv = torch.stack([(1 - s).pow(2).mean() for s in fake_scores]).mean()
    feat = fake_scores[0].new_zeros(())
    for real_scale, fake_scale in zip(real_features, fake_features):
        for real, fake in zip(real_scale, fake_scale):
            feat = feat + (real.detach() - fake).abs().mean()
    return w.gen * adv + w.feat * feat


def discriminator_adversarial(
    real_scores: Sequence[torch.Tensor],
    fake_scores: Sequence[torch.Tensor],
) -> torch.Tensor:
    """mean_scales E[(1 − D(x))²] + E[D(x̂)²]."""
    per_scale = [
        (1 - real).pow(2).mean() + fake.pow(2).mean()
        for real, fake in zip(real_scores, fake_scores)
    ]
    return torch.stack(per_scale).mean()


def loss_adversarial(
    x: AudioClip | torch.Tensor,
    xhat: AudioClip | torch.Tensor,
    D: DiscriminatorStack,
    w: LossWeights | None = None,
) -> tuple[torch.Tensor, torch.Tensor]:
    """(generator side, discriminator side). The discriminator side sees x̂ detached."""
    w = w or LossWeights()
    x, xhat = _as_batch(x), _as_batch(xhat)
    if x.shape != xhat.shape:
        raise ShapeMismatchError(f"adversarial inputs differ: {tuple(x.shape)} vs {tuple(xhat.shape)}")
    dtype = next(D.parameters()).dtype
    x, xhat = x.to(dtype), xhat.to(dtype)

    real_scores, real_features = D(x)
    fake_scores, fake_features = D(xhat)
    gen_side = generator_adversarial(fake_scores, real_features, fake_features, w)

    detached_scores, _ = D(xhat.detach())
    disc_side = discriminator_adversarial(real_scores, detached_scores)
    return gen_side, disc_side


# ---------------------------------------------------------------------------
# Combined
# ---------------------------------------------------------------------------

def loss_total(
    reconstruction: torch.Tensor,
    adversarial_gen: torch.Tensor,
    detection: Sequence[torch.Tensor],
    localization: Sequence[torch.Tensor],
    w: LossWeights | None = None,
) -> torch.Tensor:
    """Clean-clip terms plus detection/localization averaged over augmentation variants."""
    w = w or LossWeights()
    if not detection or len(detection) != len(localization):
        raise ShapeMismatchError(
            f"need >= 1 augmentation variant with paired losses, got {len(detection)} / {len(localization)}"
        )
    det = torch.stack(list(detection)).mean()
    loc = torch.stack(list(localization)).mean()
    return reconstruction + adversarial_gen + w.det * det + w.loc * loc
