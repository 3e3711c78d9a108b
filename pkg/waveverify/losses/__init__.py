"""
losses/__init__.py

Public API for the training objectives.
"""

from .losses import (
    BCE_EPS,
    LossWeights,
    StftSpec,
    discriminator_adversarial,
    generator_adversarial,
    loss_adversarial,
    loss_detection,
    loss_localization,
    loss_reconstruction,
    loss_total,
    stft_magnitude,
)

__all__ = [
    "BCE_EPS",
    "LossWeights",
    "StftSpec",
    "discriminator_adversarial",
    "generator_adversarial",
    "loss_adversarial",
    "loss_detection",
    "loss_localization",
    "loss_reconstruction",
    "loss_total",
    "stft_magnitude",
]
