"""
tests/test_trainer.py

Joint training loop on a tiny configuration: determinism, validation
cadence, resumption and the zero-weight / non-finite edge cases, plus the
slow overfit and robustness acceptance runs.
"""

from __future__ import annotations

import json

import numpy as np
import pytest
import torch

from waveverify.core.models import AudioClip, RandomSource
from waveverify.errors import ConfigError, NonFiniteLossError
from waveverify.evaluation import AttackSpec, batch_ber, batch_miou, evaluate
from waveverify.scheduler import load_scheduler_state
from waveverify.training import (
    Corpus,
    Trainer,
    TrainingConfig,
    corpus_for,
    load_checkpoint,
    models_from_checkpoint,
    toy_clips,
)

# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

TINY = dict(
    seed=3,
    total_iters=6,
    batch_size=2,
    variants=2,
    validation_interval=3,
    validation_clips=2,
    clip_seconds=0.05,
    toy_clips=4,
    n_bits=8,
    generator_channels=(8, 8),
    detector_channels=(8, 8, 8, 8),
    locator_channels=8,
    discriminator_channels=(4, 4, 4, 4),
    effects=("identity", "highpass", "speed", "gaussian_noise"),
)


def tiny_config(**overrides) -> TrainingConfig:
    return TrainingConfig(**{**TINY, **overrides})


def tiny_trainer(tmp_path, name: str = "run", **overrides) -> Trainer:
    config = tiny_config(**overrides)
    return Trainer(config, corpus_for(config), tmp_path / name)


def read_trace(run_dir) -> list[dict]:
    return [json.loads(line) for line in (run_dir / "trace.jsonl").read_text().splitlines()]


def fixed_batch(config: TrainingConfig) -> tuple[torch.Tensor, torch.Tensor]:
    corpus = corpus_for(config)
    rng = RandomSource(99)
    x = corpus.sample_batch(config.batch_size, rng)
    bits = torch.from_numpy(rng.integers(0, 2, size=(config.batch_size, config.n_bits))).float()
    return x, bits


class TestSetup:

    def test_empty_corpus(self, tmp_path, monkeypatch):
        config = tiny_config()
        corpus = corpus_for(config)
        monkeypatch.setattr(Corpus, "__len__", lambda self: 0)
        with pytest.raises(ConfigError):
            Trainer(config, corpus, tmp_path)

    def test_scheduler_over_configured_effects(self, tmp_path):
        trainer = tiny_trainer(tmp_path)
        assert trainer.scheduler.effects == ["identity", "highpass", "speed", "gaussian_noise"]

    def test_bad_batch(self, tmp_path):
        with pytest.raises(ConfigError):
            tiny_trainer(tmp_path).train_step(torch.zeros(1600), torch.zeros(1, 8))


class TestTrainStep:

    def test_record_shape(self, tmp_path):
        trainer = tiny_trainer(tmp_path)
        record = trainer.train_step(*fixed_batch(trainer.config))
        assert record["kind"] == "step"
        assert len(record["effects"]) == 2
        for key in ("loss_total", "loss_rec", "loss_adv", "loss_det", "loss_loc", "loss_disc"):
            assert np.isfinite(record[key])
        for item in record["effects"]:
            assert 0 <= item["ber"] <= 1 and 0 <= item["miou"] <= 1
        assert trainer.stats["steps"] == 1 and trainer.stats["effect_applications"] == 2

    def test_zero_weights_freeze_generator_side(self, tmp_path):
        zero = {f"lambda_{k}": 0.0 for k in ("wave", "spec", "mel", "det", "loc", "gen", "feat")}
        trainer = tiny_trainer(tmp_path, **zero)
        frozen = {
            name: [p.detach().clone() for p in getattr(trainer, name).parameters()]
            for name in ("generator", "detector", "locator", "discriminator")
        }
        x, bits = fixed_batch(trainer.config)
        for _ in range(3):
            trainer.train_step(x, bits)
        for name in ("generator", "detector", "locator"):
            for before, after in zip(frozen[name], getattr(trainer, name).parameters()):
                assert torch.equal(before, after)
        assert any(
            not torch.equal(before, after)
            for before, after in zip(frozen["discriminator"], trainer.discriminator.parameters())
        )

    def test_scheduler_receives_feedback(self, tmp_path):
        trainer = tiny_trainer(tmp_path)
        before = trainer.scheduler
        record = trainer.train_step(*fixed_batch(trainer.config))
        expected = dict(before.ber_ema)
        for item in record["effects"]:
            expected[item["effect"]] = 0.9 * expected[item["effect"]] + 0.1 * item["ber"]
        for effect, value in expected.items():
            assert trainer.scheduler.ber_ema[effect] == pytest.approx(value, abs=1e-9)
        assert before.ber_ema == {e: 0.5 for e in before.effects}

    def test_no_augmentation_uses_identity(self, tmp_path):
        trainer = tiny_trainer(tmp_path, augment=False)
        record = trainer.train_step(*fixed_batch(trainer.config))
        assert [item["effect"] for item in record["effects"]] == ["identity", "identity"]
        assert trainer.stats["segment_augmentations"] == 0

    def test_nonfinite_loss_aborts(self, tmp_path, monkeypatch):
        trainer = tiny_trainer(tmp_path)
        monkeypatch.setattr(
            "waveverify.training.trainer.loss_reconstruction",
            lambda *args, **kwargs: torch.tensor(float("nan")),
        )
        with pytest.raises(NonFiniteLossError) as info:
            trainer.train_step(*fixed_batch(trainer.config))
        assert info.value.snapshot["iteration"] == 0
        assert len(info.value.snapshot["effects"]) == 2
        assert trainer.stats["nonfinite_aborts"] == 1

    def test_nonfinite_parameters_abort(self, tmp_path):
        trainer = tiny_trainer(tmp_path)
        original = trainer.opt_g.step

        def poisoned_step(*args, **kwargs):
            result = original(*args, **kwargs)
            with torch.no_grad():
                next(trainer.locator.parameters()).fill_(float("nan"))
            return result

        trainer.opt_g.step = poisoned_step
        with pytest.raises(NonFiniteLossError) as info:
            trainer.train_step(*fixed_batch(trainer.config))
        assert info.value.snapshot["parameters"] == ["locator"]
        assert trainer.stats["nonfinite_aborts"] == 1

    def test_loss_decreases_on_fixed_batch(self, tmp_path):
        trainer = tiny_trainer(tmp_path, augment=False, variants=1, lr=1e-3)
        x, bits = fixed_batch(trainer.config)
        losses = [trainer.train_step(x, bits)["loss_total"] for _ in range(100)]
        assert np.mean(losses[-5:]) < np.mean(losses[:5])


class TestLoop:

    def test_deterministic_trace(self, tmp_path):
        tiny_trainer(tmp_path, "a").train()
        tiny_trainer(tmp_path, "b").train()
        assert read_trace(tmp_path / "a") == read_trace(tmp_path / "b")

    def test_validation_cadence(self, tmp_path):
        trainer = tiny_trainer(tmp_path, total_iters=30, validation_interval=10, variants=1)
        trainer.train()
        trace = read_trace(tmp_path / "run")
        assert [r["iteration"] for r in trace if r["kind"] == "validation"] == [10, 20, 30]
        assert sum(r["kind"] == "step" for r in trace) == 30
        assert trainer.stats["validations"] == 3

    def test_run_directory_files(self, tmp_path):
        best = tiny_trainer(tmp_path).train()
        run = tmp_path / "run"
        assert {"trace.jsonl", "latest.ckpt", "best.ckpt", "scheduler_state.json"} <= {p.name for p in run.iterdir()}
        assert load_checkpoint(run / "best.ckpt").iteration == best.iteration
        assert best.best in best.history and best.best["iteration"] == best.iteration
        load_scheduler_state(run / "scheduler_state.json")

    def test_resume_reproduces_trace(self, tmp_path):
        tiny_trainer(tmp_path, "full").train()
        tiny_trainer(tmp_path, "half").train(total_iters=3)
        config = tiny_config()
        resumed = Trainer.from_checkpoint(tmp_path / "half" / "latest.ckpt", corpus_for(config), tmp_path / "half")
        assert resumed.iteration == 3
        resumed.train()
        assert read_trace(tmp_path / "half") == read_trace(tmp_path / "full")

    def test_resume_returns_stored_best(self, tmp_path, monkeypatch):
        scores = {3: 0.1, 6: 0.2, 9: 0.5}

        def scripted_validation(self):
            self.stats["validations"] += 1
            return {"kind": "validation", "iteration": self.iteration, "ber": scores[self.iteration], "miou": 0.5}

        monkeypatch.setattr(Trainer, "validate", scripted_validation)
        tiny_trainer(tmp_path, "first").train()
        config = tiny_config()
        resumed = Trainer.from_checkpoint(tmp_path / "first" / "latest.ckpt", corpus_for(config), tmp_path / "second")
        assert resumed.best["iteration"] == 3
        best = resumed.train(total_iters=9)
        assert best.iteration == 3
        assert best.best == {"kind": "validation", "iteration": 3, "ber": 0.1, "miou": 0.5}
        assert not (tmp_path / "second" / "best.ckpt").exists()

    def test_latest_checkpoint_carries_current_best(self, tmp_path):
        trainer = tiny_trainer(tmp_path)
        trainer.train()
        latest = load_checkpoint(tmp_path / "run" / "latest.ckpt")
        assert latest.best == trainer.best

    def test_exploitation_phase_reached(self, tmp_path):
        trainer = tiny_trainer(tmp_path)
        trainer.train()
        assert trainer.scheduler.phase.value == "exploitation"
        assert trainer.scheduler.temperature == pytest.approx(0.7)

    def test_models_from_checkpoint(self, tmp_path):
        trainer = tiny_trainer(tmp_path)
        bundle = models_from_checkpoint(trainer.checkpoint())
        assert bundle.n_bits == 8 and bundle.model_id == "iter-0"
        assert not bundle.generator.training
        for a, b in zip(bundle.detector.parameters(), trainer.detector.parameters()):
            assert torch.equal(a, b)


@pytest.fixture(scope="module")
def overfit_trainer(tmp_path_factory) -> Trainer:
    config = TrainingConfig(
        seed=0, total_iters=5000, batch_size=8, variants=1, augment=False, n_bits=16,
        generator_channels=(16, 32, 48, 64), detector_channels=(32, 64, 96, 128),
        validation_interval=1000, toy_clips=50, clip_seconds=0.5, lr=5e-4,
    )
    trainer = Trainer(config, corpus_for(config), tmp_path_factory.mktemp("overfit"))
    trainer.train()
    return trainer


@pytest.mark.slow
class TestOverfitAcceptance:

    def test_train_set_bits_and_mask(self, overfit_trainer):
        config = overfit_trainer.config
        x = torch.stack(overfit_trainer.corpus.pools[0].train)
        rng = RandomSource(123)
        bits = torch.from_numpy(rng.integers(0, 2, size=(x.shape[0], config.n_bits))).float()
        bundle = overfit_trainer.bundle().eval()
        with torch.no_grad():
            wm, _ = bundle.generator(x, bits)
            decoded = (bundle.detector(wm).mean(dim=-1) >= 0.5).float()
            presence = bundle.locator(wm)
        assert float(batch_ber(decoded, bits).mean()) <= 0.01
        assert float(batch_miou(presence, torch.ones_like(presence)).mean()) >= 0.95

    def test_every_step_finite(self, overfit_trainer):
        steps = [r for r in read_trace(overfit_trainer.run_dir) if r["kind"] == "step"]
        assert len(steps) == 5000
        for record in steps:
            for key in ("loss_total", "loss_rec", "loss_adv", "loss_det", "loss_loc", "loss_disc"):
                assert np.isfinite(record[key]), (record["iteration"], key)
        for name in ("generator", "detector", "locator", "discriminator"):
            assert all(torch.isfinite(p).all() for p in getattr(overfit_trainer, name).parameters())

    def test_robustness_after_augmented_training(self, overfit_trainer, tmp_path):
        config = TrainingConfig(**{**overfit_trainer.config.model_dump(), "augment": True, "total_iters": 10_000})
        trainer = Trainer(config, overfit_trainer.corpus, tmp_path / "augmented")
        for name in ("generator", "detector", "locator", "discriminator"):
            getattr(trainer, name).load_state_dict(getattr(overfit_trainer, name).state_dict())
        trainer.opt_g.load_state_dict(overfit_trainer.opt_g.state_dict())
        trainer.opt_d.load_state_dict(overfit_trainer.opt_d.state_dict())
        trainer.iteration = overfit_trainer.iteration
        trainer.train()

        held_out = [
            AudioClip.from_tensor(t, config.sample_rate)
            for t in toy_clips(50, config.clip_samples, config.sample_rate, seed=777)
        ]
        attacks = [AttackSpec(), AttackSpec.single("resample", target_rate_hz=8000)]
        report = evaluate(trainer.bundle().eval(), held_out, attacks, RandomSource(5))
        for row in report.rows:
            assert row.tpr >= 0.9 and row.fpr <= 0.1, row
