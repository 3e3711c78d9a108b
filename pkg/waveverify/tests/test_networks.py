"""
tests/test_networks.py

Shape arithmetic, FiLM conditioning, the mixture-of-experts detector,
the locator and the discriminator stack.
"""

from __future__ import annotations

import math

import numpy as np
import pytest
import torch

from waveverify.core.models import AudioClip, MessageBits, PresenceMask, RandomSource
from waveverify.errors import ClipTooShortError, MaskMismatchError, ShapeMismatchError
from waveverify.networks import (
    ConvBlockSpec,
    DetectorConfig,
    DetectorModel,
    DiscriminatorConfig,
    DiscriminatorStack,
    FiLMParams,
    GeneratorConfig,
    GeneratorModel,
    LocatorConfig,
    LocatorModel,
    aggregate_bits,
    conv_out_len,
    conv_transpose_out_len,
    count_parameters,
    detect,
    embed,
    film_modulate,
    locate,
    message_to_film,
    moe_combine,
)

# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def tiny_generator(**overrides) -> GeneratorModel:
    torch.manual_seed(0)
    fields = dict(n_bits=4, channels=(8, 8), bands=4, hidden=16, kernel=3, spectral_n_fft=8)
    fields.update(overrides)
    return GeneratorModel(GeneratorConfig(**fields))


def tiny_detector(**overrides) -> DetectorModel:
    torch.manual_seed(0)
    fields = dict(n_bits=4, channels=(8, 8, 8, 8), n_experts=2, expert_layers=1)
    fields.update(overrides)
    return DetectorModel(DetectorConfig(**fields))


def noise_clip(n: int, seed: int = 0) -> AudioClip:
    return AudioClip(RandomSource(seed).normal(n, scale=0.1).astype(np.float32), 16_000)


class TestConvArithmetic:

    @pytest.mark.parametrize("t_in,padding,kernel,stride,expected", [
        (16000, 3, 7, 2, 8000),
        (10, 1, 4, 2, 5),
        (7, 3, 7, 2, 4),
    ])
    def test_examples(self, t_in, padding, kernel, stride, expected):
        assert conv_out_len(t_in, ConvBlockSpec(kernel, stride, padding)) == expected

    def test_matches_torch(self):
        rng = RandomSource(5)
        for _ in range(50):
            kernel = int(rng.integers(1, 9))
            stride = int(rng.integers(1, kernel + 1))
            padding = int(rng.integers(0, 4))
            t_in = int(rng.integers(kernel, 200))
            conv = torch.nn.Conv1d(1, 1, kernel, stride=stride, padding=padding)
            out = conv(torch.zeros(1, 1, t_in))
            assert conv_out_len(t_in, ConvBlockSpec(kernel, stride, padding)) == out.shape[-1]

    def test_matches_direct_formula(self):
        rng = RandomSource(6)
        for _ in range(10_000):
            kernel = int(rng.integers(1, 16))
            stride = int(rng.integers(1, kernel + 1))
            padding = int(rng.integers(0, 8))
            t_in = int(rng.integers(max(1, kernel - 2 * padding), 20_000))
            expected = math.floor((t_in + 2 * padding - kernel) / stride) + 1
            assert conv_out_len(t_in, ConvBlockSpec(kernel, stride, padding)) == expected

    def test_transpose(self):
        assert conv_transpose_out_len(500, ConvBlockSpec(4, 2, 1)) == 1000

    def test_too_short(self):
        with pytest.raises(ClipTooShortError):
            conv_out_len(2, ConvBlockSpec(7, 2, 0))

    def test_invalid_spec(self):
        with pytest.raises(ShapeMismatchError):
            ConvBlockSpec(2, 3, 0)


class TestFiLM:

    def test_identity(self):
        features = torch.randn(4, 10)
        assert torch.equal(film_modulate(features, FiLMParams.identity(4)), features)

    def test_zero_gamma_gives_beta(self):
        features = torch.randn(3, 6)
        beta = torch.tensor([1.0, -2.0, 0.5])
        out = film_modulate(features, FiLMParams(torch.zeros(3), beta, 0))
        assert torch.equal(out, beta.unsqueeze(-1).expand(3, 6))

    def test_scalar_example(self):
        out = film_modulate(torch.full((1, 1), 3.0), FiLMParams(torch.tensor([2.0]), torch.tensor([1.0]), 0))
        assert out.item() == 7.0

    def test_channel_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            film_modulate(torch.randn(5, 10), FiLMParams.identity(4))

    def test_zero_band_is_identity_there(self):
        model = tiny_generator()
        bits = torch.tensor([[1.0, 0.0, 1.0, 1.0]])
        before = model.message_to_film(bits)[0]
        model.film.zero_band(0, 1)
        after = model.message_to_film(bits)[0]
        band = after.band_slice(1)
        assert torch.equal(after.gamma[0, band], torch.ones(2))
        assert torch.equal(after.beta[0, band], torch.zeros(2))
        others = [i for i in range(8) if i not in range(band.start, band.stop)]
        assert torch.equal(after.gamma[0, others], before.gamma[0, others])
        assert torch.equal(after.beta[0, others], before.beta[0, others])

    def test_zeroed_band_changes_only_its_channels(self, monkeypatch):
        from waveverify.networks import generator as generator_module

        recorded: list[torch.Tensor] = []

        def recording_modulate(features, params):
            out = film_modulate(features, params)
            recorded.append(out.detach().clone())
            return out

        monkeypatch.setattr(generator_module, "film_modulate", recording_modulate)
        model = tiny_generator().eval()
        x = torch.randn(1, 256) * 0.1
        bits = torch.tensor([[1.0, 0.0, 1.0, 1.0]])
        with torch.no_grad():
            model.residual(x, bits)
            model.film.zero_band(1, 2)
            model.residual(x, bits)
        before, after = recorded[:2], recorded[2:]
        assert torch.equal(before[0], after[0])
        diff = (after[1] - before[1]).abs().amax(dim=(0, 2))
        band = slice(4, 6)
        assert float(diff[band].max()) > 0
        assert torch.all(diff[:4] == 0) and torch.all(diff[6:] == 0)

    def test_message_to_film_checks_bits(self):
        with pytest.raises(ShapeMismatchError):
            message_to_film(tiny_generator(), MessageBits((1, 0)))


class TestMixtureOfExperts:

    def test_zero_logits_average(self):
        experts = torch.randn(2, 3, 4, 5)
        out = moe_combine(experts, torch.zeros(2, 3))
        assert torch.allclose(out, 0.5 * experts.sum(dim=1))

    def test_saturated_gate_selects(self):
        experts = torch.randn(1, 2, 3, 4)
        out = moe_combine(experts, torch.tensor([[50.0, -50.0]]))
        assert torch.allclose(out, experts[:, 0], atol=1e-6)

    def test_constant_experts(self):
        out = moe_combine(torch.full((1, 4, 1, 3), 2.5), torch.zeros(1, 4))
        assert torch.allclose(out, torch.full((1, 1, 3), 5.0))

    def test_frame_gates(self):
        experts = torch.ones(1, 2, 1, 2)
        logits = torch.tensor([[[50.0, -50.0], [-50.0, 50.0]]])
        assert torch.allclose(moe_combine(experts, logits), torch.ones(1, 1, 2), atol=1e-6)

    def test_bad_shapes(self):
        with pytest.raises(ShapeMismatchError):
            moe_combine(torch.randn(1, 2, 3), torch.zeros(1, 2))
        with pytest.raises(ShapeMismatchError):
            moe_combine(torch.randn(1, 2, 3, 4), torch.zeros(1, 3))

    def test_gradcheck(self):
        experts = torch.randn(1, 3, 2, 4, dtype=torch.float64, requires_grad=True)
        logits = torch.randn(1, 3, dtype=torch.float64, requires_grad=True)
        assert torch.autograd.gradcheck(moe_combine, (experts, logits))


class TestGenerator:

    @pytest.mark.parametrize("length", [4000, 16000, 16001, 5])
    def test_residual_length(self, length):
        model = tiny_generator()
        x = torch.randn(2, length) * 0.1
        bits = torch.tensor([[1.0, 0, 1, 0], [0, 1, 1, 1]])
        wm, delta = model(x, bits)
        assert wm.shape == x.shape and delta.shape == x.shape

    def test_residual_bounded(self):
        model = tiny_generator(residual_gain=0.1)
        delta = model.residual(torch.randn(1, 800) * 10, torch.ones(1, 4))
        assert float(delta.abs().max()) <= 0.1

    def test_watermarked_clamped(self):
        wm, _ = tiny_generator()(torch.full((1, 64), 0.99), torch.ones(1, 4))
        assert float(wm.abs().max()) <= 1.0

    def test_zero_init_output(self):
        model = tiny_generator(zero_init_output=True)
        x = torch.randn(1, 256)
        wm, delta = model(x, torch.ones(1, 4))
        assert torch.equal(delta, torch.zeros_like(delta))
        assert torch.equal(wm, x.clamp(-1, 1))

    def test_identity_film_equals_unconditioned(self):
        model = tiny_generator()
        x = torch.randn(1, 128) * 0.1
        film = [FiLMParams.identity(c, level) for level, c in enumerate(model.config.channels)]
        with torch.no_grad():
            assert torch.allclose(model.residual(x, film=film), model.residual(x), atol=1e-7)

    def test_message_changes_residual(self):
        model = tiny_generator()
        x = torch.randn(1, 128) * 0.1
        with torch.no_grad():
            a = model.residual(x, torch.tensor([[1.0, 1, 1, 1]]))
            b = model.residual(x, torch.tensor([[0.0, 0, 0, 0]]))
        assert not torch.allclose(a, b)

    def test_too_short(self):
        with pytest.raises(ClipTooShortError):
            tiny_generator().residual(torch.zeros(1, 3))

    def test_wrong_film_levels(self):
        with pytest.raises(ShapeMismatchError):
            tiny_generator().residual(torch.zeros(1, 16), film=[FiLMParams.identity(8)])

    def test_channels_must_split_into_bands(self):
        with pytest.raises(ValueError):
            GeneratorConfig(channels=(6,), bands=4)

    def test_channels_from_string(self):
        assert GeneratorConfig(channels="8, 16").channels == (8, 16)

    def test_gradcheck(self):
        model = tiny_generator(channels=(4,), bands=2, hidden=4).double()
        bits = torch.tensor([[1.0, 0, 0, 1]], dtype=torch.float64)
        x = (torch.randn(1, 16, dtype=torch.float64) * 0.1).requires_grad_()
        assert torch.autograd.gradcheck(lambda wave: model.residual(wave, bits), (x,), atol=1e-5)

    def test_parameter_gradcheck(self):
        model = tiny_generator(channels=(8, 8), hidden=8).double()
        names = [name for name, _ in model.named_parameters()]
        params = tuple(p.detach().clone().requires_grad_() for p in model.parameters())
        bits = torch.tensor([[1.0, 0, 0, 1]], dtype=torch.float64)
        x = (torch.randn(1, 64, dtype=torch.float64) * 0.1).requires_grad_()

        def residual(wave, *values):
            return torch.func.functional_call(model, dict(zip(names, values)), (wave, bits))[1]

        assert torch.autograd.gradcheck(residual, (x, *params), atol=1e-5, fast_mode=True)

    def test_embed_clip(self):
        model = tiny_generator().eval()
        clip = noise_clip(1000)
        wm, residual = embed(model, clip, MessageBits((1, 0, 1, 1)))
        assert wm.num_samples == residual.num_samples == 1000
        assert wm.sample_rate == 16_000
        with pytest.raises(ShapeMismatchError):
            embed(model, clip, MessageBits((1, 0)))


class TestDetector:

    def test_frame_count(self):
        model = tiny_detector()
        assert model.num_frames(16000) == 2000
        assert model(torch.zeros(2, 16000)).shape == (2, 4, 2000)

    def test_detect_shapes(self):
        probs, message = detect(tiny_detector().eval(), noise_clip(1600))
        assert probs.shape == (4, 200)
        assert message.n == 4
        assert np.all((probs >= 0) & (probs <= 1))

    def test_aggregation_respects_mask(self):
        probs = torch.tensor([[[0.9, 0.8, 0.1]]])
        mean = aggregate_bits(probs, torch.tensor([[1.0, 1.0, 0.0]]))
        assert mean.item() == pytest.approx(0.85)
        assert aggregate_bits(probs).item() == pytest.approx(0.6)

    def test_empty_mask_falls_back(self):
        probs = torch.tensor([[[0.9, 0.8, 0.1]]])
        assert aggregate_bits(probs, torch.zeros(1, 3)).item() == pytest.approx(0.6)

    def test_detect_with_mask(self):
        model = tiny_detector().eval()
        clip = noise_clip(1600)
        half = np.concatenate([np.ones(800, np.int8), np.zeros(800, np.int8)])
        probs, message = detect(model, clip, PresenceMask(half, hard=True))
        assert probs.shape == (4, 200)
        with pytest.raises(MaskMismatchError):
            detect(model, clip, PresenceMask(np.ones(10, np.int8), hard=True))

    def test_frame_gating(self):
        model = tiny_detector(gating="frame")
        assert model(torch.zeros(1, 1600)).shape == (1, 4, 200)

    def test_circular_shift_covariance(self):
        model = tiny_detector(padding_mode="circular").eval()
        x = torch.randn(1, 1600) * 0.1
        with torch.no_grad():
            base = model(x)
            shifted = model(torch.roll(x, 16 * 5, dims=-1))
        assert torch.allclose(shifted, torch.roll(base, 10, dims=-1), atol=1e-5)


class TestLocator:

    @pytest.mark.parametrize("length", [1, 7, 800, 801, 16000])
    def test_alignment(self, length):
        model = LocatorModel(LocatorConfig(channels=8))
        out = model(torch.randn(1, length))
        assert out.shape == (1, length)
        assert float(out.min()) >= 0.0 and float(out.max()) <= 1.0

    def test_alignment_sweep(self):
        model = LocatorModel(LocatorConfig(channels=4)).eval()
        with torch.no_grad():
            for length in [*range(1000, 5000, 37), 5000]:
                assert model(torch.zeros(1, length)).shape[-1] == length

    def test_empty_input(self):
        with pytest.raises(ClipTooShortError):
            LocatorModel(LocatorConfig(channels=4))(torch.zeros(1, 0))

    def test_shared_weights(self):
        shared = LocatorModel(LocatorConfig(channels=16))
        separate = LocatorModel(LocatorConfig(channels=16, share_weights=False))
        assert shared.enc2 is shared.enc3
        assert count_parameters(shared) < count_parameters(separate)

    def test_lightweight_against_detector(self):
        detector = DetectorModel(DetectorConfig(channels=(128, 256, 384, 512)))
        locator = LocatorModel(LocatorConfig())
        assert count_parameters(locator) < 0.05 * count_parameters(detector)

    def test_locate_returns_soft_mask(self):
        mask = locate(LocatorModel(LocatorConfig(channels=8)).eval(), noise_clip(500))
        assert len(mask) == 500
        assert not mask.hard


class TestDiscriminator:

    def test_scales_and_taps(self):
        stack = DiscriminatorStack(DiscriminatorConfig(channels=(4, 8, 8, 8)))
        scores, features = stack(torch.randn(2, 4000))
        assert len(scores) == 3 and len(features) == 3
        assert all(len(taps) == 4 for taps in features)
        assert scores[0].shape[0] == 2
        assert scores[1].shape[-1] < scores[0].shape[-1]
