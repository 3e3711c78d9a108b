"""
evaluation/__init__.py

Public API for metrics and the robustness harness.
"""

from .harness import (
    AttackSpec,
    EvalReport,
    EvalRow,
    ModelBundle,
    WatermarkSystem,
    attacks_for,
    default_attacks,
    evaluate,
    removal_sweep,
)
from .metrics import batch_ber, batch_miou, ber, miou, sisnr, tpr_fpr

__all__ = [
    "AttackSpec",
    "EvalReport",
    "EvalRow",
    "ModelBundle",
    "WatermarkSystem",
    "attacks_for",
    "default_attacks",
    "evaluate",
    "removal_sweep",
    "batch_ber",
    "batch_miou",
    "ber",
    "miou",
    "sisnr",
    "tpr_fpr",
]
