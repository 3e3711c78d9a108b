"""
tests/test_checkpoint.py

Checkpoint file: canonical bytes, payload contents and format validation.
"""

from __future__ import annotations

import io

import numpy as np
import pytest
import torch

from waveverify.errors import CheckpointFormatError
from waveverify.training import Checkpoint, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint


def sample_checkpoint() -> Checkpoint:
    torch.manual_seed(0)
    net = torch.nn.Linear(3, 2)
    opt = torch.optim.AdamW(net.parameters(), lr=1e-3, betas=(0.8, 0.99))
    lr = torch.optim.lr_scheduler.ExponentialLR(opt, gamma=0.99)
    net(torch.randn(4, 3)).sum().backward()
    opt.step()
    lr.step()
    return Checkpoint(
        configs={"training": {"seed": 3, "generator_channels": [8, 8]}},
        models={"generator": net.state_dict()},
        optimizers={"generator": opt.state_dict()},
        lr_schedulers={"generator": lr.state_dict()},
        scheduler_state={"effects": ["speed"], "probs": {"speed": 1.0}},
        rng_state={"seed": 3, "spawned": 0, "bit_generator": np.random.Generator(np.random.PCG64(3)).bit_generator.state},
        iteration=12,
        history=[{"kind": "validation", "ber": 0.25}],
        best={"iteration": 10, "ber": 0.25, "miou": 0.5},
    )


def raw_archive(payload) -> bytes:
    buffer = io.BytesIO()
    torch.save(payload, buffer)
    return buffer.getvalue()


class TestRoundtrip:

    def test_save_load_save_identical(self, tmp_path):
        first = tmp_path / "a.ckpt"
        second = tmp_path / "b.ckpt"
        save_checkpoint(sample_checkpoint(), first)
        save_checkpoint(load_checkpoint(first), second)
        assert first.read_bytes() == second.read_bytes()

    def test_contents_survive(self):
        original = sample_checkpoint()
        back = decode_checkpoint(encode_checkpoint(original))
        assert back.iteration == 12
        assert back.best == original.best
        assert back.rng_state == original.rng_state
        for key, tensor in original.models["generator"].items():
            assert torch.equal(back.models["generator"][key], tensor)
        state = back.optimizers["generator"]["state"]
        assert set(state) == {0, 1}
        assert back.optimizers["generator"]["param_groups"][0]["betas"] == (0.8, 0.99)

    def test_loaded_state_is_usable(self):
        back = decode_checkpoint(encode_checkpoint(sample_checkpoint()))
        net = torch.nn.Linear(3, 2)
        net.load_state_dict(back.models["generator"])
        opt = torch.optim.AdamW(net.parameters(), lr=1e-3)
        opt.load_state_dict(back.optimizers["generator"])
        lr = torch.optim.lr_scheduler.ExponentialLR(opt, gamma=0.99)
        lr.load_state_dict(back.lr_schedulers["generator"])
        assert opt.param_groups[0]["betas"] == (0.8, 0.99)
        assert lr.last_epoch == 1

    def test_payload_is_versioned(self):
        payload = torch.load(io.BytesIO(encode_checkpoint(sample_checkpoint())), weights_only=True)
        assert payload["format_version"] == 1
        assert payload["iteration"] == 12


class TestValidation:

    def test_garbage_bytes(self):
        with pytest.raises(CheckpointFormatError):
            decode_checkpoint(b"NOPE" + bytes(64))

    def test_bad_version(self):
        payload = sample_checkpoint().to_payload()
        payload["format_version"] = 99
        with pytest.raises(CheckpointFormatError, match="version"):
            decode_checkpoint(raw_archive(payload))

    def test_missing_version(self):
        with pytest.raises(CheckpointFormatError, match="format_version"):
            decode_checkpoint(raw_archive({"iteration": 3}))

    def test_missing_field(self):
        payload = sample_checkpoint().to_payload()
        del payload["history"]
        with pytest.raises(CheckpointFormatError, match="history"):
            decode_checkpoint(raw_archive(payload))

    @pytest.mark.parametrize("cut", [3, 20, 200, -1])
    def test_truncated(self, cut):
        data = encode_checkpoint(sample_checkpoint())
        with pytest.raises(CheckpointFormatError):
            decode_checkpoint(data[:cut])

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointFormatError):
            load_checkpoint(tmp_path / "absent.ckpt")

    def test_unstorable_value(self):
        checkpoint = sample_checkpoint()
        checkpoint.history.append({"bad": object()})
        with pytest.raises(CheckpointFormatError):
            encode_checkpoint(checkpoint)
