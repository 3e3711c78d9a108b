"""
training/trainer.py

Joint training loop.

One step:
    1. x̂ = G(x, y)                               (ground-truth mask = ones)
    2. for each augmentation variant:
         per item: segment replacement / sequence permutation (seeded odds)
         one scheduled effect (shared by the batch) → x̃, m̃
         detector(x̃), locator(x̃) → L_det, L_loc; BER / MIoU feedback
    3. L = L_rec(x, x̂) + L_adv,gen(x, x̂) + λ_det·mean L_det + λ_loc·mean L_loc
       AdamW step on generator + detector + locator
    4. discriminator AdamW step on E[(1−D(x))²] + E[D(x̂.detach())²]
    5. both learning rates decay ×γ; the scheduler absorbs the feedback

All randomness flows through one RandomSource owned by the trainer, so
(seed, config, corpus) fixes the metric trace, and a checkpoint carries
the RandomSource state for exact resumption.

Run directory: trace.jsonl (one record per step and per validation),
latest.ckpt, best.ckpt, scheduler_state.json.
"""

from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Any

import torch

from ..core.masks import pool_mask_to_frames
from ..core.models import RandomSource
from ..effects.base import EffectContext, EffectId
from ..effects.registry import EffectRegistry, apply_effect_tensor, default_registry
from ..effects.temporal import SEQUENCE_KINDS, segment_augment_tensor, sequence_augment_tensor
from ..errors import ConfigError, NonFiniteLossError
from ..evaluation.harness import ModelBundle
from ..evaluation.metrics import batch_ber, batch_miou
from ..losses.losses import (
    discriminator_adversarial,
    generator_adversarial,
    loss_detection,
    loss_localization,
    loss_reconstruction,
    loss_total,
)
from ..networks.detector import DetectorConfig, DetectorModel, aggregate_bits
from ..networks.discriminator import DiscriminatorConfig, DiscriminatorStack
from ..networks.generator import GeneratorConfig, GeneratorModel
from ..networks.locator import LocatorConfig, LocatorModel
from ..scheduler.models import EffectFeedback, SchedulerState
from ..scheduler.scheduler import (
    advance_schedule,
    init_scheduler,
    record_param_outcome,
    sample_effects,
    save_scheduler_state,
    update_scheduler,
)
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import TrainingConfig
from .corpus import Corpus, CorpusSpec

logger = logging.getLogger(__name__)

_NETWORKS = ("generator", "detector", "locator", "discriminator")


def _round(value: float) -> float:
    return float(f"{value:.10g}")


class Trainer:
    def __init__(
        self,
        config: TrainingConfig,
        corpus: Corpus,
        run_dir: str | os.PathLike | None = None,
        registry: EffectRegistry | None = None,
    ) -> None:
        if len(corpus) == 0:
            raise ConfigError("training corpus is empty")
        self.config = config
        self.corpus = corpus
        self.registry = registry or default_registry()
        self.run_dir = Path(run_dir if run_dir is not None else config.run_dir)
        self.device = torch.device(config.device)

        torch.manual_seed(config.seed)
        self.generator = GeneratorModel(config.generator_config()).to(self.device)
        self.detector = DetectorModel(config.detector_config()).to(self.device)
        self.locator = LocatorModel(config.locator_config()).to(self.device)
        self.discriminator = DiscriminatorStack(config.discriminator_config()).to(self.device)

        adamw = dict(lr=config.lr, betas=(config.beta1, config.beta2), weight_decay=config.weight_decay)
        self.opt_g = torch.optim.AdamW(
            [*self.generator.parameters(), *self.detector.parameters(), *self.locator.parameters()], **adamw
        )
        self.opt_d = torch.optim.AdamW(self.discriminator.parameters(), **adamw)
        self.lr_g = torch.optim.lr_scheduler.ExponentialLR(self.opt_g, gamma=config.lr_decay)
        self.lr_d = torch.optim.lr_scheduler.ExponentialLR(self.opt_d, gamma=config.lr_decay)

        self.weights = config.loss_weights()
        self.stft = config.stft_spec()
        self.temporal = config.temporal_spec()
        self.sched_config = config.scheduler_config()
        effects = list(config.effects) or self.registry.trainable()
        self.scheduler: SchedulerState = init_scheduler(effects, self.sched_config, self.registry)

        self.rng = RandomSource(config.seed)
        self.iteration = 0
        self.history: list[dict] = []
        self.best: dict = {}
        self._best_checkpoint: Checkpoint | None = None

        self.stats: dict[str, int] = {
            "steps": 0,
            "validations": 0,
            "effect_applications": 0,
            "segment_augmentations": 0,
            "sequence_augmentations": 0,
            "nonfinite_aborts": 0,
        }
        logger.info(
            "Trainer ready: G=%d D=%d L=%d Disc=%d params | effects=%s | run_dir=%s",
            sum(p.numel() for p in self.generator.parameters()),
            sum(p.numel() for p in self.detector.parameters()),
            sum(p.numel() for p in self.locator.parameters()),
            sum(p.numel() for p in self.discriminator.parameters()),
            self.scheduler.effects,
            self.run_dir,
        )

    # ------------------------------------------------------------------
    # Augmentation
    # ------------------------------------------------------------------

    def _temporal(self, wm: torch.Tensor, x: torch.Tensor, rng: RandomSource) -> tuple[torch.Tensor, torch.Tensor]:
        """Per-item segment replacement and sequence permutation; returns (wave, mask)."""
        sr = self.config.sample_rate
        waves, masks = [], []
        batch = wm.shape[0]
        for b in range(batch):
            wave, mask = wm[b], torch.ones_like(wm[b])
            if rng.uniform() < self.config.segment_prob:
                alternative = x[(b + 1) % batch] if batch > 1 else torch.zeros_like(x[b])
                wave, mask = segment_augment_tensor(wave, x[b], alternative, mask, self.temporal, rng, sr)
                self.stats["segment_augmentations"] += 1
            if rng.uniform() < self.config.sequence_prob:
                kind = SEQUENCE_KINDS[int(rng.integers(0, len(SEQUENCE_KINDS)))]
                spec = self.temporal.model_copy(update={"sequence_kind": kind})
                wave, mask = sequence_augment_tensor(wave, mask, spec, rng, sr)
                self.stats["sequence_augmentations"] += 1
            waves.append(wave)
            masks.append(mask)
        return torch.stack(waves), torch.stack(masks)

    def _variant(self, wm: torch.Tensor, x: torch.Tensor, rng: RandomSource):
        if self.config.augment:
            wave, mask = self._temporal(wm, x, rng)
            effect, params = sample_effects(self.scheduler, 1, rng, self.registry)[0]
        else:
            wave, mask = wm, torch.ones_like(wm)
            effect, params = EffectId.IDENTITY.value, {}
        ctx = EffectContext(self.config.sample_rate, rng, self.corpus.babble_pool())
        wave, mask = apply_effect_tensor(wave, mask, effect, params, ctx, self.registry)
        self.stats["effect_applications"] += 1
        return effect, params, wave, mask

    # ------------------------------------------------------------------
    # Step
    # ------------------------------------------------------------------

    def _check_finite(self, losses: dict[str, torch.Tensor], effects: list[str]) -> None:
        bad = [name for name, value in losses.items() if not torch.isfinite(value).all()]
        if bad:
            self.stats["nonfinite_aborts"] += 1
            snapshot = {
                "iteration": self.iteration,
                "losses": {k: float(v.detach()) for k, v in losses.items()},
                "effects": effects,
                "lr": self.opt_g.param_groups[0]["lr"],
            }
            logger.error("Non-finite loss %s at iteration %d: %s", bad, self.iteration, snapshot)
            raise NonFiniteLossError(f"non-finite loss {bad} at iteration {self.iteration}", snapshot)

    def _check_finite_parameters(self, effects: list[str]) -> None:
        bad = [
            name for name in _NETWORKS
            if not all(torch.isfinite(p).all() for p in getattr(self, name).parameters())
        ]
        if bad:
            self.stats["nonfinite_aborts"] += 1
            snapshot = {
                "iteration": self.iteration,
                "parameters": bad,
                "effects": effects,
                "lr": self.opt_g.param_groups[0]["lr"],
            }
            logger.error("Non-finite parameters in %s at iteration %d: %s", bad, self.iteration, snapshot)
            raise NonFiniteLossError(f"non-finite parameters in {bad} at iteration {self.iteration}", snapshot)

    def train_step(self, x: torch.Tensor, bits: torch.Tensor, rng: RandomSource | None = None) -> dict[str, Any]:
        """One joint optimization step on x (B, T) with messages bits (B, n_bits)."""
        rng = rng or self.rng
        if x.dim() != 2 or x.shape[0] == 0:
            raise ConfigError(f"batch must be a non-empty (B, T) tensor, got {tuple(x.shape)}")
        for net in (self.generator, self.detector, self.locator, self.discriminator):
            net.train()
        x = x.to(self.device)
        bits = bits.to(device=self.device, dtype=x.dtype)
        w = self.weights

        wm, _ = self.generator(x, bits)

        det_losses, loc_losses, effect_records, feedback = [], [], [], []
        for _ in range(self.config.variants):
            effect, params, wave, mask = self._variant(wm, x, rng)
            probs = self.detector(wave)
            frame_mask = pool_mask_to_frames(mask, probs.shape[-1])
            loc = self.locator(wave)
            det_losses.append(loss_detection(probs, bits, frame_mask))
            loc_losses.append(loss_localization(loc, mask))

            with torch.no_grad():
                decoded = (aggregate_bits(probs, frame_mask) >= 0.5).to(bits.dtype)
                item_ber = batch_ber(decoded, bits)
                item_miou = batch_miou(loc, mask)
            mean_ber, mean_miou = float(item_ber.mean()), float(item_miou.mean())
            if effect in self.scheduler.probs:
                feedback.append(EffectFeedback(effect, mean_ber, mean_miou))
                if params:
                    for b in range(x.shape[0]):
                        self.scheduler = record_param_outcome(
                            self.scheduler, effect, params, bool(item_ber[b] == 0), self.registry
                        )
            effect_records.append({
                "effect": effect,
                "params": {k: _round(v) for k, v in params.items()},
                "ber": _round(mean_ber),
                "miou": _round(mean_miou),
            })

        rec = loss_reconstruction(x, wm, w, self.stft)
        real_scores, real_features = self.discriminator(x)
        fake_scores, fake_features = self.discriminator(wm)
        adv = generator_adversarial(fake_scores, real_features, fake_features, w)
        total = loss_total(rec, adv, det_losses, loc_losses, w)

        losses = {
            "total": total,
            "rec": rec,
            "adv": adv,
            "det": torch.stack(det_losses).mean(),
            "loc": torch.stack(loc_losses).mean(),
        }
        self._check_finite(losses, [r["effect"] for r in effect_records])

        self.opt_g.zero_grad(set_to_none=True)
        total.backward()
        self.opt_g.step()

        self.opt_d.zero_grad(set_to_none=True)
        real_scores, _ = self.discriminator(x)
        fake_scores, _ = self.discriminator(wm.detach())
        disc = discriminator_adversarial(real_scores, fake_scores)
        self._check_finite({"disc": disc}, [r["effect"] for r in effect_records])
        disc.backward()
        self.opt_d.step()
        self._check_finite_parameters([r["effect"] for r in effect_records])

        lr = self.opt_g.param_groups[0]["lr"]
        self.lr_g.step()
        self.lr_d.step()
        self.scheduler = update_scheduler(self.scheduler, feedback)
        self.stats["steps"] += 1

        return {
            "kind": "step",
            "iteration": self.iteration,
            "lr": _round(lr),
            "loss_total": _round(float(total.detach())),
            "loss_rec": _round(float(rec.detach())),
            "loss_adv": _round(float(adv.detach())),
            "loss_det": _round(float(losses["det"].detach())),
            "loss_loc": _round(float(losses["loc"].detach())),
            "loss_disc": _round(float(disc.detach())),
            "effects": effect_records,
        }

    # ------------------------------------------------------------------
    # Validation
    # ------------------------------------------------------------------

    def validate(self) -> dict[str, Any]:
        """
        Half-watermarked validation clips (first half marked), no augmentation.
        BER uses the locator-predicted region; MIoU is against the true halves.
        """
        x = self.corpus.validation_batch().to(self.device)
        msg_rng = RandomSource(self.config.seed + 1)
        bits = torch.from_numpy(msg_rng.integers(0, 2, size=(x.shape[0], self.config.n_bits))).to(
            device=self.device, dtype=x.dtype
        )
        half = x.shape[-1] // 2
        for net in (self.generator, self.detector, self.locator):
            net.eval()
        with torch.no_grad():
            wm, _ = self.generator(x, bits)
            mixed = torch.cat([wm[:, :half], x[:, half:]], dim=-1)
            mask = torch.cat([torch.ones_like(x[:, :half]), torch.zeros_like(x[:, half:])], dim=-1)
            loc = self.locator(mixed)
            probs = self.detector(mixed)
            region = pool_mask_to_frames((loc >= 0.5).to(x.dtype), probs.shape[-1])
            decoded = (aggregate_bits(probs, region) >= 0.5).to(bits.dtype)
            ber = float(batch_ber(decoded, bits).mean())
            miou = float(batch_miou(loc, mask).mean())
        self.stats["validations"] += 1
        record = {"kind": "validation", "iteration": self.iteration, "ber": _round(ber), "miou": _round(miou)}
        logger.info("Validation @%d: BER=%.4f MIoU=%.4f", self.iteration, ber, miou)
        return record

    # ------------------------------------------------------------------
    # Loop
    # ------------------------------------------------------------------

    def _trace(self, record: dict) -> None:
        self.run_dir.mkdir(parents=True, exist_ok=True)
        with open(self.run_dir / "trace.jsonl", "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    @staticmethod
    def _better(record: dict, best: dict) -> bool:
        if not best:
            return True
        return (record["ber"], -record["miou"]) < (best["ber"], -best["miou"])

    def train(self, total_iters: int | None = None) -> Checkpoint:
        """
        Run until total_iters (default: config.total_iters) and return the
        best-validation checkpoint (latest when no validation ran).
        """
        total = total_iters or self.config.total_iters
        while self.iteration < total:
            self.scheduler = advance_schedule(self.scheduler, self.iteration, self.config.total_iters, self.sched_config)
            x = self.corpus.sample_batch(self.config.batch_size, self.rng)
            bits = torch.from_numpy(
                self.rng.integers(0, 2, size=(x.shape[0], self.config.n_bits))
            ).to(torch.float32)
            record = self.train_step(x, bits)
            self._trace(record)
            self.iteration += 1
            if self.iteration % 50 == 0:
                logger.info("iter %d loss=%.4f", self.iteration, record["loss_total"])

            if self.iteration % self.config.validation_interval == 0:
                val = self.validate()
                self.history.append(val)
                self._trace(val)
                improved = self._better(val, self.best)
                if improved:
                    self.best = val
                checkpoint = self.checkpoint()
                save_checkpoint(checkpoint, self.run_dir / "latest.ckpt")
                if improved:
                    self._best_checkpoint = checkpoint
                    save_checkpoint(checkpoint, self.run_dir / "best.ckpt")
                save_scheduler_state(self.scheduler, self.run_dir / "scheduler_state.json")

        self.run_dir.mkdir(parents=True, exist_ok=True)
        save_scheduler_state(self.scheduler, self.run_dir / "scheduler_state.json")
        return self._best_checkpoint or self.checkpoint()

    # ------------------------------------------------------------------
    # Persistence
    # ------------------------------------------------------------------

    def checkpoint(self) -> Checkpoint:
        return Checkpoint(
            configs={
                "training": self.config.model_dump(mode="json"),
                "generator": self.generator.config.model_dump(mode="json"),
                "detector": self.detector.config.model_dump(mode="json"),
                "locator": self.locator.config.model_dump(mode="json"),
                "discriminator": self.discriminator.config.model_dump(mode="json"),
            },
            models={
                "generator": dict(self.generator.state_dict()),
                "detector": dict(self.detector.state_dict()),
                "locator": dict(self.locator.state_dict()),
                "discriminator": dict(self.discriminator.state_dict()),
            },
            optimizers={"generator": self.opt_g.state_dict(), "discriminator": self.opt_d.state_dict()},
            lr_schedulers={"generator": self.lr_g.state_dict(), "discriminator": self.lr_d.state_dict()},
            scheduler_state=self.scheduler.to_dict(),
            rng_state=self.rng.get_state(),
            iteration=self.iteration,
            history=list(self.history),
            best=dict(self.best),
        )

    @classmethod
    def from_checkpoint(
        cls,
        checkpoint: Checkpoint | str | os.PathLike,
        corpus: Corpus,
        run_dir: str | os.PathLike | None = None,
        registry: EffectRegistry | None = None,
    ) -> "Trainer":
        source_dir = None
        if not isinstance(checkpoint, Checkpoint):
            source_dir = Path(checkpoint).parent
            checkpoint = load_checkpoint(checkpoint)
        config = TrainingConfig(**checkpoint.configs["training"])
        trainer = cls(config, corpus, run_dir, registry)
        for name in _NETWORKS:
            getattr(trainer, name).load_state_dict(checkpoint.models[name])
        trainer.opt_g.load_state_dict(checkpoint.optimizers["generator"])
        trainer.opt_d.load_state_dict(checkpoint.optimizers["discriminator"])
        trainer.lr_g.load_state_dict(checkpoint.lr_schedulers["generator"])
        trainer.lr_d.load_state_dict(checkpoint.lr_schedulers["discriminator"])
        trainer.scheduler = SchedulerState.from_dict(checkpoint.scheduler_state)
        trainer.rng = RandomSource.from_state(checkpoint.rng_state)
        trainer.iteration = checkpoint.iteration
        trainer.history = list(checkpoint.history)
        trainer.best = dict(checkpoint.best)
        trainer._best_checkpoint = trainer._restore_best(checkpoint, source_dir)
        logger.info("Resumed training at iteration %d", trainer.iteration)
        return trainer

    def _restore_best(self, checkpoint: Checkpoint, source_dir: Path | None) -> Checkpoint | None:
        """The stored best-validation checkpoint, looked up in the run and source directories."""
        if not checkpoint.best:
            return None
        wanted = checkpoint.best.get("iteration")
        if wanted == checkpoint.iteration:
            return checkpoint
        for directory in (self.run_dir, source_dir):
            if directory is None or not (directory / "best.ckpt").is_file():
                continue
            candidate = load_checkpoint(directory / "best.ckpt")
            if candidate.iteration == wanted:
                return candidate
        logger.warning("best.ckpt for iteration %s not found; best state will not be restored", wanted)
        return None

    def bundle(self) -> ModelBundle:
        return ModelBundle(self.generator, self.detector, self.locator)


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------

def corpus_for(config: TrainingConfig) -> Corpus:
    spec = CorpusSpec.parse(
        config.corpus,
        sample_rate=config.sample_rate,
        clip_seconds=config.clip_seconds,
        toy_clips=config.toy_clips,
        validation_clips=config.validation_clips,
        seed=config.seed,
    )
    return Corpus(spec)


def train(config: TrainingConfig, corpus: Corpus | CorpusSpec | None = None, run_dir=None) -> Checkpoint:
    if corpus is None:
        corpus = corpus_for(config)
    elif isinstance(corpus, CorpusSpec):
        corpus = Corpus(corpus)
    return Trainer(config, corpus, run_dir).train()


def models_from_checkpoint(checkpoint: Checkpoint | str | os.PathLike, device: str = "cpu") -> ModelBundle:
    """Inference bundle (eval mode) from a checkpoint object or file."""
    model_id = ""
    if not isinstance(checkpoint, Checkpoint):
        model_id = Path(checkpoint).name
        checkpoint = load_checkpoint(checkpoint)
    generator = GeneratorModel(GeneratorConfig(**checkpoint.configs["generator"]))
    detector = DetectorModel(DetectorConfig(**checkpoint.configs["detector"]))
    locator = LocatorModel(LocatorConfig(**checkpoint.configs["locator"]))
    for name, net in (("generator", generator), ("detector", detector), ("locator", locator)):
        net.load_state_dict(checkpoint.models[name])
        net.to(device)
    return ModelBundle(generator, detector, locator, model_id or f"iter-{checkpoint.iteration}").eval()
