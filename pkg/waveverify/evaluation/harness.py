"""
evaluation/harness.py

Robustness evaluation.

For every attack row and every clip: embed a random message, attack the
watermarked clip and (with the same effect chain) the clean clip, locate
and detect on both, then aggregate.

    TPR / FPR   clip score = mean locator probability, threshold 0.5
    BER         detector readout over the locator-predicted region
    MIoU        binarized locator output vs. the attacked ground-truth mask
    SI-SNR      watermarked vs. original, before the attack

Rows are effect chains (one or more effects in order) optionally followed
by a sequence attack (reverse / rotate / shuffle). Results are deterministic
given the system, the clips and the seed.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..core.masks import mask_full
from ..core.models import AudioClip, MessageBits, PresenceMask, RandomSource
from ..effects.base import EffectId
from ..effects.registry import EffectRegistry, EffectStep, apply_chain, default_registry
from ..effects.temporal import SequenceKind, TemporalAugSpec, segment_augment, sequence_augment
from ..errors import ConfigError
from ..networks.detector import DetectorModel, detect
from ..networks.generator import GeneratorModel, embed
from ..networks.locator import LocatorModel, locate
from .metrics import ber, miou, sisnr, tpr_fpr

logger = logging.getLogger(__name__)


class WatermarkSystem(Protocol):
    n_bits: int

    def embed(self, clip: AudioClip, message: MessageBits) -> AudioClip: ...

    def locate(self, clip: AudioClip) -> PresenceMask: ...

    def detect(self, clip: AudioClip, region: PresenceMask | None = None) -> MessageBits: ...


@dataclass
class ModelBundle:
    """Trained generator + detector + locator used as one WatermarkSystem."""

    generator: GeneratorModel
    detector: DetectorModel
    locator: LocatorModel
    model_id: str = ""

    @property
    def n_bits(self) -> int:
        return self.generator.config.n_bits

    def eval(self) -> "ModelBundle":
        for net in (self.generator, self.detector, self.locator):
            net.eval()
        return self

    def embed(self, clip: AudioClip, message: MessageBits) -> AudioClip:
        return embed(self.generator, clip, message)[0]

    def locate(self, clip: AudioClip) -> PresenceMask:
        return locate(self.locator, clip)

    def detect(self, clip: AudioClip, region: PresenceMask | None = None) -> MessageBits:
        return detect(self.detector, clip, region)[1]


# ---------------------------------------------------------------------------
# Attacks and report
# ---------------------------------------------------------------------------

class AttackSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    steps: tuple[tuple[str, dict[str, float]], ...] = ()
    sequence_kind: SequenceKind | None = None

    @classmethod
    def single(cls, effect: str, **params: float) -> "AttackSpec":
        return cls(steps=((effect, dict(params)),))

    def effect_steps(self) -> list[EffectStep]:
        return [EffectStep(name, dict(params)) for name, params in self.steps] or [EffectStep("identity")]

    @property
    def label(self) -> str:
        names = [name for name, _ in self.steps] or ["identity"]
        if self.sequence_kind:
            names.append(self.sequence_kind)
        return " + ".join(names)

    @property
    def params_label(self) -> str:
        parts = [
            ",".join(f"{k}={v:g}" for k, v in sorted(params.items()))
            for _, params in self.steps if params
        ]
        return "; ".join(parts) or "-"


class EvalRow(BaseModel):
    effect: str
    params: str
    tpr: float = Field(ge=0, le=1)
    fpr: float = Field(ge=0, le=1)
    ber: float = Field(ge=0, le=1)
    miou: float = Field(ge=0, le=1)
    sisnr: float
    clips: int


class EvalReport(BaseModel):
    rows: list[EvalRow]
    clip_count: int
    model_id: str = ""
    seed: int = 0

    def to_json(self) -> str:
        return json.dumps(self.model_dump(), indent=2)

    def render_table(self) -> str:
        header = ("Effect", "Params", "TPR", "FPR", "BER", "MIoU", "SI-SNR")
        body = [
            (r.effect, r.params, f"{r.tpr:.3f}", f"{r.fpr:.3f}", f"{r.ber:.3f}", f"{r.miou:.3f}", f"{r.sisnr:.2f}")
            for r in self.rows
        ]
        widths = [max(len(str(row[i])) for row in [header, *body]) for i in range(len(header))]
        lines = ["  ".join(str(cell).ljust(w) for cell, w in zip(row, widths)).rstrip() for row in [header, *body]]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines)


def default_attacks() -> list[AttackSpec]:
    """One row per effect at a mid-range setting, the combined attacks and the sequence attacks."""
    return [
        AttackSpec(),
        AttackSpec.single("highpass", cutoff_hz=500),
        AttackSpec.single("lowpass", cutoff_hz=5000),
        AttackSpec.single("bandpass", low_hz=300, high_hz=4000),
        AttackSpec.single("resample", target_rate_hz=8000),
        AttackSpec.single("resample", target_rate_hz=32000),
        AttackSpec.single("speed", speed_factor=0.8),
        AttackSpec.single("speed", speed_factor=1.25),
        AttackSpec.single("gaussian_noise", snr_db=20),
        AttackSpec.single("pink_noise", snr_db=20),
        AttackSpec.single("babble_noise", snr_db=20),
        AttackSpec.single("quantize8"),
        AttackSpec(steps=(("highpass", {"cutoff_hz": 3000.0}), ("gaussian_noise", {"snr_db": 20.0}))),
        AttackSpec(steps=(("lowpass", {"cutoff_hz": 2000.0}), ("speed", {"speed_factor": 0.8}))),
        AttackSpec(steps=(("bandpass", {"low_hz": 300.0, "high_hz": 4000.0}), ("resample", {"target_rate_hz": 8000.0}))),
        AttackSpec(sequence_kind="reverse"),
        AttackSpec(sequence_kind="rotate"),
        AttackSpec(sequence_kind="shuffle"),
    ]


def attacks_for(effects: Sequence[str], registry: EffectRegistry | None = None) -> list[AttackSpec]:
    """
    Rows for the named effects: their single-effect rows from default_attacks(),
    or one row at the mid-range setting when there is none.
    """
    registry = registry or default_registry()
    defaults = default_attacks()
    rows: list[AttackSpec] = []
    for name in effects:
        plugin = registry.get(name)
        if plugin.name == EffectId.IDENTITY.value:
            rows.append(AttackSpec())
            continue
        matching = [
            a for a in defaults
            if len(a.steps) == 1 and a.steps[0][0] == plugin.name and not a.sequence_kind
        ]
        rows.extend(matching or [AttackSpec.single(plugin.name, **{s.name: s.midpoint for s in plugin.param_specs})])
    if not rows:
        raise ConfigError("attack selection is empty")
    return rows


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _score(mask: PresenceMask) -> float:
    return float(np.mean(mask.values))


def evaluate(
    system: WatermarkSystem | None,
    clips: Sequence[AudioClip],
    attacks: Sequence[AttackSpec],
    rng: RandomSource,
    threshold: float = 0.5,
    model_id: str = "",
) -> EvalReport:
    if system is None:
        raise ConfigError("evaluation needs a model")
    if not clips:
        raise ConfigError("evaluation needs at least one clip")
    if not attacks:
        raise ConfigError("evaluation needs at least one attack")

    message_rng, *attack_rngs = rng.spawn(len(attacks) + 1)
    messages = [MessageBits.random(system.n_bits, message_rng) for _ in clips]
    watermarked = [system.embed(clip, msg) for clip, msg in zip(clips, messages)]
    quality = float(np.mean([sisnr(c, w) for c, w in zip(clips, watermarked)]))
    babble = [c.to_tensor() for c in clips]

    rows: list[EvalRow] = []
    for attack, attack_rng in zip(attacks, attack_rngs):
        steps = attack.effect_steps()
        scores, labels, bers, mious = [], [], [], []
        for clip, wm, msg in zip(clips, watermarked, messages):
            wm_att, wm_mask = apply_chain(wm, mask_full(wm.num_samples, 1), steps, attack_rng, babble)
            clean_att, clean_mask = apply_chain(clip, mask_full(clip.num_samples, 0), steps, attack_rng, babble)
            if attack.sequence_kind:
                seq = TemporalAugSpec(sequence_kind=attack.sequence_kind)
                wm_att, wm_mask = sequence_augment(wm_att, wm_mask, seq, attack_rng)
                clean_att, clean_mask = sequence_augment(clean_att, clean_mask, seq, attack_rng)

            region = system.locate(wm_att)
            scores.append(_score(region))
            labels.append(True)
            scores.append(_score(system.locate(clean_att)))
            labels.append(False)
            bers.append(ber(system.detect(wm_att, region), msg))
            mious.append(miou(region, wm_mask))

        tpr, fpr = tpr_fpr(scores, labels, threshold)
        row = EvalRow(
            effect=attack.label, params=attack.params_label, tpr=tpr, fpr=fpr,
            ber=float(np.mean(bers)), miou=float(np.mean(mious)), sisnr=quality, clips=len(clips),
        )
        logger.info("eval %-28s TPR=%.3f FPR=%.3f BER=%.3f MIoU=%.3f", row.effect, tpr, fpr, row.ber, row.miou)
        rows.append(row)

    return EvalReport(rows=rows, clip_count=len(clips), model_id=model_id, seed=rng.seed)


def removal_sweep(
    system: WatermarkSystem,
    clips: Sequence[AudioClip],
    fractions: Sequence[float],
    rng: RandomSource,
    segment_len_s: float = 0.1,
) -> dict[float, float]:
    """Mean MIoU after replacing each fraction of 0.1 s segments with non-watermarked audio."""
    if not clips:
        raise ConfigError("removal sweep needs at least one clip")
    message_rng, sweep_rng = rng.spawn(2)
    results: dict[float, float] = {}
    watermarked = [system.embed(c, MessageBits.random(system.n_bits, message_rng)) for c in clips]
    for fraction in fractions:
        spec = TemporalAugSpec(segment_len_s=segment_len_s, modify_fraction=fraction)
        scores = []
        for i, (clip, wm) in enumerate(zip(clips, watermarked)):
            other = clips[(i + 1) % len(clips)]
            alternative = other if other.num_samples >= clip.num_samples else clip
            attacked, mask = segment_augment(wm, clip, alternative, mask_full(wm.num_samples, 1), spec, sweep_rng)
            scores.append(miou(system.locate(attacked), mask))
        results[float(fraction)] = float(np.mean(scores))
        logger.info("removal %.0f%% → MIoU %.3f", 100 * fraction, results[float(fraction)])
    return results
