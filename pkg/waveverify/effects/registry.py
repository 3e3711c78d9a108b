"""
effects/registry.py

Effect plugin discovery and the public apply / sample entry points.

Plugins are discovered from effects/builtin/ at first use: every BaseEffect
subclass defined in a module there is instantiated once. A module that
fails to import, or a class that fails to construct, is logged and skipped
so one broken plugin never takes the rest down. Names listed in
settings.DISABLED_EFFECTS are dropped.

Mask handling: effects that change length (speed) remap the mask by
nearest-neighbour indexing; every other effect returns the mask unchanged.

Effects marked differentiable = False see a detached input, and their output
is passed through straight_through() so training gets an identity gradient.
"""

from __future__ import annotations

import importlib
import inspect
import logging
import pkgutil
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import torch

from ..config import settings
from ..core.masks import resample_mask
from ..core.models import AudioClip, PresenceMask, RandomSource
from ..errors import UnknownEffectError
from .base import BaseEffect, EffectContext, EffectId, EffectParams, straight_through

logger = logging.getLogger(__name__)


class EffectRegistry:
    def __init__(self, disabled: Iterable[str] = ()) -> None:
        self._disabled = frozenset(disabled)
        self._effects: dict[str, BaseEffect] = {e.name: e for e in self._load_effects()}
        self.stats: dict[str, int] = {name: 0 for name in self._effects}
        logger.info(
            "EffectRegistry loaded %d effect(s): %s | disabled=%s",
            len(self._effects),
            sorted(self._effects),
            sorted(self._disabled) or "none",
        )

    def get(self, name: str | EffectId) -> BaseEffect:
        key = name.value if isinstance(name, EffectId) else str(name)
        try:
            return self._effects[key]
        except KeyError:
            raise UnknownEffectError(
                f"unknown effect {key!r}; known: {', '.join(sorted(self._effects))}"
            ) from None

    def names(self) -> list[str]:
        return sorted(self._effects)

    def trainable(self) -> list[str]:
        """Registered effects that can run here, in EffectId declaration order."""
        order = [e.value for e in EffectId]
        return [
            name for name in sorted(self._effects, key=order.index)
            if self._effects[name].available()
        ]

    def __contains__(self, name: object) -> bool:
        return str(getattr(name, "value", name)) in self._effects

    def _load_effects(self) -> list[BaseEffect]:
        from . import builtin as builtin_pkg
        effects: list[BaseEffect] = []
        for _, module_name, _ in pkgutil.iter_modules(builtin_pkg.__path__):
            try:
                module = importlib.import_module(f"{builtin_pkg.__name__}.{module_name}")
            except Exception as exc:
                logger.error("Failed to import effect module %r: %s", module_name, exc)
                continue
            for _, obj in inspect.getmembers(module, inspect.isclass):
                if (
                    issubclass(obj, BaseEffect)
                    and obj is not BaseEffect
                    and obj.__module__ == module.__name__
                ):
                    try:
                        instance: BaseEffect = obj()
                    except Exception as exc:
                        logger.error("Failed to instantiate effect %r: %s", obj, exc)
                        continue
                    if instance.enabled and instance.name not in self._disabled:
                        effects.append(instance)
        return effects


@lru_cache(maxsize=1)
def default_registry() -> EffectRegistry:
    return EffectRegistry(disabled=settings.DISABLED_EFFECTS)


# ---------------------------------------------------------------------------
# Application
# ---------------------------------------------------------------------------

def apply_effect_tensor(
    wave: torch.Tensor,
    mask: torch.Tensor,
    effect: str | EffectId,
    params: Mapping[str, float],
    ctx: EffectContext,
    registry: EffectRegistry | None = None,
) -> tuple[torch.Tensor, torch.Tensor]:
    """
    Tensor-level effect application used by training and evaluation.

    wave and mask are (..., T) with matching shapes; the returned mask has the
    returned wave's length.
    """
    registry = registry or default_registry()
    plugin = registry.get(effect)
    clean = plugin.validate(params)
    if plugin.differentiable:
        out = plugin.apply(wave, clean, ctx)
    else:
        out = straight_through(wave, plugin.apply(wave.detach(), clean, ctx))
    registry.stats[plugin.name] = registry.stats.get(plugin.name, 0) + 1
    if out.shape[-1] != mask.shape[-1]:
        mask = resample_mask(mask, out.shape[-1])
    return out, mask


def apply_effect(
    clip: AudioClip,
    mask: PresenceMask,
    effect: str | EffectId,
    params: Mapping[str, float],
    rng: RandomSource,
    babble_pool: Sequence[torch.Tensor] = (),
    registry: EffectRegistry | None = None,
) -> tuple[AudioClip, PresenceMask]:
    mask.check_paired(clip)
    registry = registry or default_registry()
    plugin = registry.get(effect)
    if plugin.name == EffectId.IDENTITY.value:
        plugin.validate(params)
        return clip, mask

    ctx = EffectContext(sample_rate=clip.sample_rate, rng=rng, babble_pool=babble_pool)
    wave = clip.to_tensor(torch.float64)
    with torch.no_grad():
        out, out_mask = apply_effect_tensor(wave, mask.to_tensor(), plugin.name, params, ctx, registry)
    return AudioClip.from_tensor(out, clip.sample_rate), PresenceMask.from_tensor(out_mask, hard=mask.hard)


@dataclass(frozen=True)
class EffectStep:
    """One (effect, params) stage of an attack chain."""

    effect: str
    params: EffectParams = field(default_factory=dict)

    def label(self) -> str:
        if not self.params:
            return self.effect
        inner = ",".join(f"{k}={v:g}" for k, v in sorted(self.params.items()))
        return f"{self.effect}({inner})"


def apply_chain(
    clip: AudioClip,
    mask: PresenceMask,
    steps: Sequence[EffectStep],
    rng: RandomSource,
    babble_pool: Sequence[torch.Tensor] = (),
    registry: EffectRegistry | None = None,
) -> tuple[AudioClip, PresenceMask]:
    """Apply effects in order, carrying the mask through each stage."""
    for step in steps:
        clip, mask = apply_effect(clip, mask, step.effect, step.params, rng, babble_pool, registry)
    return clip, mask


# ---------------------------------------------------------------------------
# Parameter sampling
# ---------------------------------------------------------------------------

def sample_effect_params(
    effect: str | EffectId,
    rng: RandomSource,
    posterior: Mapping[str, Sequence[float]] | None = None,
    registry: EffectRegistry | None = None,
) -> EffectParams:
    """
    Draw parameters for effect.

    Without a posterior every parameter is uniform over its legal range.
    With one, posterior[param] holds normalized per-bin weights; a bin is
    drawn from them and the value is uniform inside that bin.
    """
    plugin = (registry or default_registry()).get(effect)
    if not posterior:
        return plugin.sample_uniform(rng)
    params: EffectParams = {}
    for spec in plugin.param_specs:
        weights = posterior.get(spec.name)
        if weights is None:
            params[spec.name] = spec.sample_uniform(rng)
            continue
        n_bins = len(weights)
        index = int(rng.choice(n_bins, p=list(weights)))
        params[spec.name] = spec.sample_in_bin(index, n_bins, rng)
    return params
