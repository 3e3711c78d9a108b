"""
scheduler/scheduler.py

Dynamic effect scheduler.

Effect selection
    p(e) = softmax_e( (w1·BER_ema(e) + w2·(1 − MIoU_ema(e))) / T )
    over ALL scheduled effects. Only effects present in a step's feedback
    have their EMAs moved (EMA ← β·EMA + (1−β)·observed).

Parameter selection
    Every parameter is split into bins (n_bins uniform bins, or one bin per
    discrete choice). Each bin counts (successes, trials), success meaning
    BER == 0. The Laplace-smoothed success rate (s+α)/(t+α+β_s) is turned
    into a sampling weight 1 − rate, so bins the model handles poorly are
    drawn more often. Bins are only used in the exploitation phase.

Schedule
    Exploration until exploit_start·total_iters, then exploitation with T
    annealed linearly from temperature_initial to temperature_final over the
    next anneal_fraction·total_iters iterations.
"""

from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..core.models import RandomSource
from ..effects.base import EffectParams
from ..effects.registry import EffectRegistry, default_registry, sample_effect_params
from ..errors import CheckpointFormatError, ConfigError, UnknownEffectError
from .models import EffectFeedback, Phase, SchedulerConfig, SchedulerState

logger = logging.getLogger(__name__)


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = np.exp(scores - scores.max())
    return shifted / shifted.sum()


def _require_effect(state: SchedulerState, effect: str) -> str:
    key = str(getattr(effect, "value", effect))
    if key not in state.probs:
        raise UnknownEffectError(f"effect {key!r} is not scheduled; scheduled: {state.effects}")
    return key


def _recompute_probs(state: SchedulerState) -> None:
    scores = np.array([
        (state.w1 * state.ber_ema[e] + state.w2 * (1.0 - state.miou_ema[e])) / state.temperature
        for e in state.effects
    ])
    probs = _softmax(scores)
    state.probs = {e: float(p) for e, p in zip(state.effects, probs)}


def smoothed_success_rate(success: int, total: int, alpha: float = 1.0, beta: float = 1.0) -> float:
    return (success + alpha) / (total + alpha + beta)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def init_scheduler(
    effects: Sequence[str],
    config: SchedulerConfig | None = None,
    registry: EffectRegistry | None = None,
) -> SchedulerState:
    config = config or SchedulerConfig()
    registry = registry or default_registry()
    names = [str(getattr(e, "value", e)) for e in effects]
    if not names:
        raise ConfigError("scheduler needs at least one effect")
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate effects in scheduler list: {names}")

    param_bins: dict[str, dict[str, list[list[int]]]] = {}
    for name in names:
        plugin = registry.get(name)
        param_bins[name] = {
            spec.name: [[0, 0] for _ in range(spec.num_bins(config.n_bins))]
            for spec in plugin.param_specs
        }

    uniform = 1.0 / len(names)
    state = SchedulerState(
        effects=names,
        probs={n: uniform for n in names},
        ber_ema={n: 0.5 for n in names},
        miou_ema={n: 0.5 for n in names},
        temperature=config.temperature_initial,
        w1=config.w1,
        w2=config.w2,
        ema_beta=config.ema_beta,
        laplace_alpha=config.laplace_alpha,
        laplace_beta=config.laplace_beta,
        n_bins=config.n_bins,
        param_bins=param_bins,
        phase=Phase.EXPLORATION,
    )
    logger.info("Scheduler initialised over %d effect(s): %s", len(names), names)
    return state


def sample_effects(
    state: SchedulerState,
    k: int,
    rng: RandomSource,
    registry: EffectRegistry | None = None,
) -> list[tuple[str, EffectParams]]:
    if k < 1:
        raise ConfigError(f"sample count must be >= 1, got {k}")
    probs = np.array([state.probs[e] for e in state.effects], dtype=np.float64)
    picks = rng.choice(len(state.effects), size=k, p=probs / probs.sum())
    draws: list[tuple[str, EffectParams]] = []
    for index in picks:
        effect = state.effects[int(index)]
        posterior = param_posterior(state, effect) if state.phase is Phase.EXPLOITATION else None
        draws.append((effect, sample_effect_params(effect, rng, posterior, registry)))
    return draws


def update_scheduler(state: SchedulerState, feedback: Sequence[EffectFeedback]) -> SchedulerState:
    new = state.copy()
    beta = new.ema_beta
    for item in feedback:
        key = _require_effect(new, item.effect)
        new.ber_ema[key] = beta * new.ber_ema[key] + (1 - beta) * item.ber
        new.miou_ema[key] = beta * new.miou_ema[key] + (1 - beta) * item.miou
    _recompute_probs(new)
    logger.debug("Scheduler probs: %s", {e: round(p, 4) for e, p in new.probs.items()})
    return new


def record_param_outcome(
    state: SchedulerState,
    effect: str,
    params: Mapping[str, float],
    success: bool,
    registry: EffectRegistry | None = None,
) -> SchedulerState:
    key = _require_effect(state, effect)
    plugin = (registry or default_registry()).get(key)
    clean = plugin.validate(params)
    new = state.copy()
    for spec in plugin.param_specs:
        bins = new.param_bins[key][spec.name]
        counter = bins[spec.bin_index(clean[spec.name], len(bins))]
        counter[1] += 1
        if success:
            counter[0] += 1
    return new


def param_posterior(state: SchedulerState, effect: str) -> dict[str, list[float]]:
    """Normalized per-bin sampling weights for each parameter of effect."""
    key = _require_effect(state, effect)
    posterior: dict[str, list[float]] = {}
    for param, bins in state.param_bins[key].items():
        weights = np.array([
            1.0 - smoothed_success_rate(s, t, state.laplace_alpha, state.laplace_beta)
            for s, t in bins
        ])
        posterior[param] = (weights / weights.sum()).tolist()
    return posterior


def advance_schedule(
    state: SchedulerState,
    iteration: int,
    total_iters: int,
    config: SchedulerConfig | None = None,
) -> SchedulerState:
    """Phase and temperature for the given iteration (0-based)."""
    config = config or SchedulerConfig()
    switch = config.exploit_start * total_iters
    ramp = config.anneal_fraction * total_iters

    if iteration < switch:
        phase, temperature = Phase.EXPLORATION, config.temperature_initial
    else:
        progress = 1.0 if ramp <= 0 else min(1.0, (iteration - switch) / ramp)
        phase = Phase.EXPLOITATION
        temperature = config.temperature_initial + progress * (
            config.temperature_final - config.temperature_initial
        )

    if phase is state.phase and temperature == state.temperature:
        return state
    new = state.copy()
    if phase is not new.phase:
        logger.info("Scheduler entering %s phase at iteration %d", phase.value, iteration)
    new.phase = phase
    new.temperature = temperature
    _recompute_probs(new)
    return new


# ---------------------------------------------------------------------------
# Persistence / reporting
# ---------------------------------------------------------------------------

def scheduler_report(state: SchedulerState) -> dict:
    """Human-oriented summary: probabilities, EMAs, bin histograms and posteriors."""
    return {
        "phase": state.phase.value,
        "temperature": state.temperature,
        "effects": {
            e: {
                "prob": state.probs[e],
                "ber_ema": state.ber_ema[e],
                "miou_ema": state.miou_ema[e],
                "bins": state.param_bins.get(e, {}),
                "posterior": param_posterior(state, e),
            }
            for e in state.effects
        },
    }


def save_scheduler_state(state: SchedulerState, path: str | os.PathLike) -> None:
    Path(path).write_text(json.dumps(state.to_dict(), indent=2, sort_keys=True), encoding="utf-8")


def load_scheduler_state(path: str | os.PathLike) -> SchedulerState:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise TypeError("top-level value is not an object")
        return SchedulerState.from_dict(data)
    except (json.JSONDecodeError, TypeError, KeyError, ValueError) as exc:
        raise CheckpointFormatError(f"{path}: not a scheduler state file ({exc})") from exc
