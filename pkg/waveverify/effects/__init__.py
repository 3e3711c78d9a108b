"""
effects/__init__.py

Public API for the augmentation engine.
"""

from .base import BaseEffect, EffectContext, EffectId, EffectParams, ParamSpec
from .registry import (
    EffectRegistry,
    EffectStep,
    apply_chain,
    apply_effect,
    apply_effect_tensor,
    default_registry,
    sample_effect_params,
)
from .temporal import (
    SEQUENCE_KINDS,
    TemporalAugSpec,
    segment_augment,
    segment_augment_tensor,
    sequence_augment,
    sequence_augment_tensor,
)

__all__ = [
    "BaseEffect",
    "EffectContext",
    "EffectId",
    "EffectParams",
    "ParamSpec",
    "EffectRegistry",
    "EffectStep",
    "apply_effect",
    "apply_effect_tensor",
    "apply_chain",
    "default_registry",
    "sample_effect_params",
    "SEQUENCE_KINDS",
    "TemporalAugSpec",
    "segment_augment",
    "segment_augment_tensor",
    "sequence_augment",
    "sequence_augment_tensor",
]
