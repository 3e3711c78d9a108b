"""
tests/test_scheduler.py

Dynamic effect scheduler: probabilities, EMA feedback, parameter bins,
phase schedule and persistence.
"""

from __future__ import annotations

import math
from collections import Counter

import pytest

from waveverify.core.models import RandomSource
from waveverify.effects.registry import EffectRegistry
from waveverify.errors import CheckpointFormatError, ConfigError, ParameterRangeError, UnknownEffectError
from waveverify.scheduler import (
    EffectFeedback,
    Phase,
    SchedulerConfig,
    advance_schedule,
    init_scheduler,
    load_scheduler_state,
    param_posterior,
    record_param_outcome,
    sample_effects,
    save_scheduler_state,
    scheduler_report,
    smoothed_success_rate,
    update_scheduler,
)

SIX = ["identity", "highpass", "lowpass", "resample", "speed", "gaussian_noise"]


@pytest.fixture(scope="module")
def registry() -> EffectRegistry:
    return EffectRegistry()


def with_emas(state, ber: dict[str, float], miou: dict[str, float] | None = None):
    new = state.copy()
    new.ber_ema.update(ber)
    if miou:
        new.miou_ema.update(miou)
    return update_scheduler(new, [])


class TestInit:

    def test_six_effects_uniform(self, registry):
        state = init_scheduler(SIX, registry=registry)
        assert all(p == pytest.approx(1 / 6) for p in state.probs.values())
        assert set(state.ber_ema.values()) == {0.5}
        assert set(state.miou_ema.values()) == {0.5}
        assert state.temperature == 1.0 and state.w1 == 0.8 and state.w2 == 0.2 and state.ema_beta == 0.9
        assert state.phase is Phase.EXPLORATION

    def test_single_effect(self, registry):
        assert init_scheduler(["speed"], registry=registry).probs == {"speed": 1.0}

    def test_empty_list_rejected(self, registry):
        with pytest.raises(ConfigError):
            init_scheduler([], registry=registry)

    def test_duplicates_rejected(self, registry):
        with pytest.raises(ConfigError):
            init_scheduler(["speed", "speed"], registry=registry)

    def test_bins(self, registry):
        state = init_scheduler(["highpass", "resample", "quantize8"], registry=registry)
        assert len(state.param_bins["highpass"]["cutoff_hz"]) == 8
        assert len(state.param_bins["resample"]["target_rate_hz"]) == 3
        assert state.param_bins["quantize8"] == {}


class TestSampling:

    def test_uniform_frequencies(self, registry):
        state = init_scheduler(SIX, registry=registry)
        draws = sample_effects(state, 60_000, RandomSource(0), registry)
        counts = Counter(effect for effect, _ in draws)
        for effect in SIX:
            assert counts[effect] / 60_000 == pytest.approx(1 / 6, abs=0.01)

    def test_certain_effect(self, registry):
        state = init_scheduler(["highpass", "speed"], registry=registry)
        state.probs = {"highpass": 1.0, "speed": 0.0}
        assert {e for e, _ in sample_effects(state, 200, RandomSource(1), registry)} == {"highpass"}

    def test_exploration_params_uniform_over_range(self, registry):
        state = init_scheduler(["highpass"], registry=registry)
        for _, params in sample_effects(state, 300, RandomSource(2), registry):
            assert 100.0 <= params["cutoff_hz"] <= 3000.0

    def test_exploitation_uses_posterior(self, registry):
        state = init_scheduler(["highpass"], registry=registry)
        # every bin but the lowest is "easy"
        for index in range(1, 8):
            value = 100.0 + (index + 0.5) * 2900.0 / 8
            for _ in range(200):
                state = record_param_outcome(state, "highpass", {"cutoff_hz": value}, True, registry)
        state = advance_schedule(state, 60, 100)
        assert state.phase is Phase.EXPLOITATION
        draws = sample_effects(state, 2000, RandomSource(3), registry)
        low = sum(1 for _, p in draws if p["cutoff_hz"] < 100.0 + 2900.0 / 8)
        assert low / 2000 > 0.5

    def test_k_must_be_positive(self, registry):
        with pytest.raises(ConfigError):
            sample_effects(init_scheduler(SIX, registry=registry), 0, RandomSource(0), registry)


class TestUpdate:

    def test_identical_emas_stay_uniform(self, registry):
        state = init_scheduler(SIX, registry=registry)
        fed = update_scheduler(state, [EffectFeedback(e, 0.3, 0.7) for e in SIX])
        assert all(p == pytest.approx(1 / 6) for p in fed.probs.values())

    def test_worked_softmax(self, registry):
        state = init_scheduler(["highpass", "speed"], registry=registry)
        state = with_emas(state, {"highpass": 1.0, "speed": 0.0})
        assert state.probs["highpass"] == pytest.approx(0.690, abs=1e-3)
        assert state.probs["speed"] == pytest.approx(0.310, abs=1e-3)
        expected = math.exp(0.9) / (math.exp(0.9) + math.exp(0.1))
        assert state.probs["highpass"] == pytest.approx(expected, abs=1e-12)

    def test_ema_step(self, registry):
        state = init_scheduler(["highpass", "speed"], registry=registry)
        fed = update_scheduler(state, [EffectFeedback("highpass", 1.0, 0.5)])
        assert fed.ber_ema["highpass"] == pytest.approx(0.55)
        assert fed.ber_ema["speed"] == 0.5

    def test_input_state_untouched(self, registry):
        state = init_scheduler(["highpass", "speed"], registry=registry)
        update_scheduler(state, [EffectFeedback("highpass", 1.0, 0.0)])
        assert state.ber_ema["highpass"] == 0.5
        assert state.probs["highpass"] == 0.5

    def test_unknown_effect(self, registry):
        state = init_scheduler(["highpass"], registry=registry)
        with pytest.raises(UnknownEffectError):
            update_scheduler(state, [EffectFeedback("speed", 0.1, 0.1)])

    def test_feedback_range_checked(self):
        with pytest.raises(ParameterRangeError):
            EffectFeedback("speed", 1.5, 0.5)

    @pytest.mark.parametrize("effects", [["highpass", "speed"], ["highpass", "speed", "lowpass"]])
    def test_monotone_pressure(self, registry, effects):
        state = init_scheduler(effects, registry=registry)
        hard = effects[0]
        previous = state.probs[hard]
        crossed_at = None
        for step in range(1, 51):
            feedback = [EffectFeedback(e, 1.0 if e == hard else 0.0, 0.5) for e in effects]
            state = update_scheduler(state, feedback)
            assert state.probs[hard] > previous
            previous = state.probs[hard]
            if crossed_at is None and previous > 0.5:
                crossed_at = step
        assert crossed_at is not None and crossed_at <= 50

    def test_probabilities_sum_to_one_and_positive(self, registry):
        state = init_scheduler(SIX, registry=registry)
        rng = RandomSource(4)
        for _ in range(100):
            feedback = [EffectFeedback(e, float(rng.uniform()), float(rng.uniform())) for e in SIX[:3]]
            state = update_scheduler(state, feedback)
            assert sum(state.probs.values()) == pytest.approx(1.0, abs=1e-9)
            assert min(state.probs.values()) > 0

    def test_high_temperature_is_near_uniform(self, registry):
        state = init_scheduler(SIX, registry=registry)
        state.temperature = 100.0
        state = with_emas(state, {e: float(i % 2) for i, e in enumerate(SIX)}, {e: 0.0 for e in SIX})
        assert max(state.probs.values()) - min(state.probs.values()) < 0.02

    def test_ema_fixed_point(self, registry):
        state = init_scheduler(["speed"], registry=registry)
        for step in range(1, 71):
            state = update_scheduler(state, [EffectFeedback("speed", 0.05, 0.95)])
        assert abs(state.ber_ema["speed"] - 0.05) < 1e-3
        assert abs(state.miou_ema["speed"] - 0.95) < 1e-3


class TestParamBins:

    def test_fresh_success(self, registry):
        state = init_scheduler(["highpass"], registry=registry)
        state = record_param_outcome(state, "highpass", {"cutoff_hz": 100.0}, True, registry)
        assert state.param_bins["highpass"]["cutoff_hz"][0] == [1, 1]

    def test_success_then_failure(self, registry):
        state = init_scheduler(["highpass"], registry=registry)
        state = record_param_outcome(state, "highpass", {"cutoff_hz": 2999.0}, True, registry)
        state = record_param_outcome(state, "highpass", {"cutoff_hz": 2990.0}, False, registry)
        assert state.param_bins["highpass"]["cutoff_hz"][7] == [1, 2]

    def test_discrete_bins(self, registry):
        state = init_scheduler(["resample"], registry=registry)
        state = record_param_outcome(state, "resample", {"target_rate_hz": 32000.0}, False, registry)
        assert state.param_bins["resample"]["target_rate_hz"] == [[0, 0], [0, 0], [0, 1]]

    def test_unknown_effect(self, registry):
        state = init_scheduler(["highpass"], registry=registry)
        with pytest.raises(UnknownEffectError):
            record_param_outcome(state, "speed", {"speed_factor": 1.0}, True, registry)

    def test_out_of_range_param(self, registry):
        state = init_scheduler(["highpass"], registry=registry)
        with pytest.raises(ParameterRangeError):
            record_param_outcome(state, "highpass", {"cutoff_hz": 5000.0}, True, registry)

    @pytest.mark.parametrize("s,t,expected", [(0, 0, 0.5), (3, 4, 2 / 3), (10, 10, 11 / 12)])
    def test_laplace_rate(self, s, t, expected):
        assert smoothed_success_rate(s, t) == pytest.approx(expected, abs=1e-15)

    def test_posterior_favours_failing_bins(self, registry):
        state = init_scheduler(["resample"], registry=registry)
        for _ in range(10):
            state = record_param_outcome(state, "resample", {"target_rate_hz": 16000.0}, True, registry)
            state = record_param_outcome(state, "resample", {"target_rate_hz": 8000.0}, False, registry)
        weights = param_posterior(state, "resample")["target_rate_hz"]
        assert sum(weights) == pytest.approx(1.0)
        assert weights[0] > weights[2] > weights[1] > 0

    def test_unexplored_bins_never_zero(self, registry):
        state = init_scheduler(["highpass"], registry=registry)
        for _ in range(500):
            state = record_param_outcome(state, "highpass", {"cutoff_hz": 150.0}, True, registry)
        assert min(param_posterior(state, "highpass")["cutoff_hz"]) > 0


class TestSchedule:

    def test_phase_and_temperature(self, registry):
        state = init_scheduler(["speed"], registry=registry)
        config = SchedulerConfig()
        assert advance_schedule(state, 49, 100, config).phase is Phase.EXPLORATION
        at_switch = advance_schedule(state, 50, 100, config)
        assert at_switch.phase is Phase.EXPLOITATION and at_switch.temperature == pytest.approx(1.0)
        assert advance_schedule(state, 55, 100, config).temperature == pytest.approx(0.85)
        assert advance_schedule(state, 60, 100, config).temperature == pytest.approx(0.7)
        assert advance_schedule(state, 99, 100, config).temperature == pytest.approx(0.7)

    def test_unchanged_state_returned_as_is(self, registry):
        state = init_scheduler(["speed"], registry=registry)
        assert advance_schedule(state, 0, 100) is state


class TestIntegration:

    def test_persistently_hard_effect_gains_probability(self, registry):
        effects = ["highpass", "speed", "gaussian_noise"]
        hard = "speed"
        state = init_scheduler(effects, registry=registry)
        rng = RandomSource(21)
        history = [state.probs[hard]]
        for step in range(500):
            state = advance_schedule(state, step, 500)
            feedback = []
            for effect, params in sample_effects(state, 2, rng, registry):
                failing = effect == hard
                feedback.append(EffectFeedback(effect, 0.8 if failing else 0.1, 0.5))
                state = record_param_outcome(state, effect, params, not failing, registry)
            state = update_scheduler(state, feedback)
            history.append(state.probs[hard])
        assert all(b >= a - 1e-12 for a, b in zip(history, history[1:]))
        assert state.phase is Phase.EXPLOITATION
        assert state.probs[hard] == max(state.probs.values())
        assert history[-1] > history[0]


class TestPersistence:

    def test_roundtrip(self, registry, tmp_path):
        state = init_scheduler(SIX, registry=registry)
        state = update_scheduler(state, [EffectFeedback("speed", 0.4, 0.6)])
        state = record_param_outcome(state, "speed", {"speed_factor": 0.9}, True, registry)
        state = advance_schedule(state, 80, 100)
        save_scheduler_state(state, tmp_path / "s.json")
        back = load_scheduler_state(tmp_path / "s.json")
        assert back == state

    def test_bad_file(self, tmp_path):
        (tmp_path / "s.json").write_text("{not json")
        with pytest.raises(CheckpointFormatError):
            load_scheduler_state(tmp_path / "s.json")

    def test_report_shape(self, registry):
        report = scheduler_report(init_scheduler(["highpass", "speed"], registry=registry))
        assert report["phase"] == "exploration"
        assert set(report["effects"]) == {"highpass", "speed"}
        assert len(report["effects"]["highpass"]["posterior"]["cutoff_hz"]) == 8
