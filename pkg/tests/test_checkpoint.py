"""Tests for the checkpoint container."""

import struct

import pytest
import torch

from granular_stereo.errors import BadHeader, CheckpointVersionError, DataIOError, ShapeMismatch, TruncatedFile
from granular_stereo.model import StereoModel
from granular_stereo.training.checkpoint import (
    FORMAT_VERSION,
    MAGIC,
    decode_container,
    encode_container,
    load_checkpoint,
    read_container,
    save_checkpoint,
)
from tests.helpers import make_images, make_tiny_config, make_train_config


def make_model(seed=0) -> StereoModel:
    torch.manual_seed(seed)
    return StereoModel(make_tiny_config())


def take_adam_step(model) -> torch.optim.Optimizer:
    optimizer = torch.optim.AdamW(model.parameters(), lr=1e-3, betas=(0.85, 0.95))
    left, right = make_images(height=32, width=32)
    output = model(left, right, iters=1)
    output.final.mean().backward()
    optimizer.step()
    return optimizer


class TestContainerBytes:
    """Tests for encode_container and decode_container."""

    def test_layout(self):
        """Magic, little-endian header length, YAML header, then blobs."""
        data = encode_container({"a": torch.tensor([1.0, 2.0])}, step=7, config={"model": {}})

        assert data.startswith(MAGIC)
        (length,) = struct.unpack_from("<I", data, len(MAGIC))
        header = data[len(MAGIC) + 4:len(MAGIC) + 4 + length].decode("utf-8")
        assert "format_version: 1" in header
        assert data[-8:] == struct.pack("<2f", 1.0, 2.0)

    def test_decode(self):
        """Tensors, step and config come back as written."""
        tensors = {
            "w": torch.arange(6, dtype=torch.float32).reshape(2, 3),
            "n": torch.tensor([3], dtype=torch.int64),
            "flag": torch.tensor([True, False]),
        }
        container = decode_container(encode_container(tensors, step=12, config={"train": {"steps": 5}}))

        assert container.format_version == FORMAT_VERSION
        assert container.step == 12
        assert container.config == {"train": {"steps": 5}}
        assert list(container.tensors) == ["w", "n", "flag"]
        for name, tensor in tensors.items():
            assert container.tensors[name].dtype == tensor.dtype
            assert torch.equal(container.tensors[name], tensor)

    def test_tuples_stored_as_lists(self):
        """Tuples in the config echo are stored in the safe YAML subset."""
        container = decode_container(encode_container({}, step=0, config={"betas": (0.9, 0.99)}))
        assert container.config == {"betas": [0.9, 0.99]}

    def test_version_mismatch(self):
        """Other format versions raise CheckpointVersionError."""
        data = encode_container({}, step=0, config={}, format_version=FORMAT_VERSION + 1)
        with pytest.raises(CheckpointVersionError, match="format 2"):
            decode_container(data)

    def test_bad_magic(self):
        """Files without the magic raise BadHeader."""
        with pytest.raises(BadHeader):
            decode_container(b"PK\x03\x04" + b"\x00" * 32)

    def test_header_without_version(self):
        """A header record without format_version raises BadHeader."""
        header = b"step: 3\n"
        with pytest.raises(BadHeader):
            decode_container(MAGIC + struct.pack("<I", len(header)) + header)

    @pytest.mark.parametrize("cut", [10, 16, -4])
    def test_truncated(self, cut):
        """Data ending inside the length, header or a blob raises TruncatedFile."""
        data = encode_container({"w": torch.zeros(4)}, step=0, config={})
        with pytest.raises(TruncatedFile):
            decode_container(data[:cut])

    def test_unsupported_dtype(self):
        """Complex tensors have no container dtype."""
        with pytest.raises(ValueError):
            encode_container({"z": torch.zeros(2, dtype=torch.complex64)}, step=0, config={})


class TestCheckpointFiles:
    """Tests for save_checkpoint and load_checkpoint."""

    def test_model_round_trip(self, tmp_path):
        """Loading restores every parameter bit for bit."""
        model = make_model(seed=0)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, model, step=3, train_config=make_train_config())

        restored, container = load_checkpoint(path, make_model(seed=1))

        assert container.step == 3
        assert container.train_config() == make_train_config()
        for name, value in model.state_dict().items():
            assert torch.equal(restored.state_dict()[name], value), name

    def test_model_built_from_config_echo(self, tmp_path):
        """Without a model the config echo rebuilds one."""
        model = make_model()
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, model, step=0)

        restored, container = load_checkpoint(path)

        assert restored.config == model.config
        assert container.train_config() is None
        assert set(restored.state_dict()) == set(model.state_dict())

    def test_optimizer_round_trip(self, tmp_path):
        """Adam moments and hyper-parameters survive, betas as a tuple."""
        model = make_model()
        optimizer = take_adam_step(model)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, model, step=1, optimizer=optimizer)

        fresh = make_model(seed=1)
        fresh_optimizer = torch.optim.AdamW(fresh.parameters(), lr=5e-2)
        load_checkpoint(path, fresh, fresh_optimizer)

        group = fresh_optimizer.param_groups[0]
        assert group["betas"] == (0.85, 0.95)
        assert group["lr"] == pytest.approx(1e-3)
        original = optimizer.state_dict()["state"]
        loaded = fresh_optimizer.state_dict()["state"]
        assert set(loaded) == set(original)
        for index, moments in original.items():
            for key, value in moments.items():
                assert torch.equal(torch.as_tensor(loaded[index][key]), torch.as_tensor(value))

    def test_optimizer_missing(self, tmp_path):
        """A checkpoint without optimizer state leaves the optimizer fresh."""
        model = make_model()
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, model, step=0)
        optimizer = torch.optim.AdamW(model.parameters(), lr=5e-2)

        load_checkpoint(path, model, optimizer)

        assert optimizer.state_dict()["state"] == {}
        assert optimizer.param_groups[0]["lr"] == 5e-2

    def test_model_does_not_fit(self, tmp_path):
        """Loading into a differently built model raises ShapeMismatch naming the file."""
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, make_model(), step=1)
        torch.manual_seed(0)
        other = StereoModel(make_tiny_config(multi_granularity=False))

        with pytest.raises(ShapeMismatch, match="model.ckpt") as excinfo:
            load_checkpoint(path, other)
        assert excinfo.value.exit_code == 5

    def test_missing_file(self, tmp_path):
        """Unreadable paths raise DataIOError."""
        with pytest.raises(DataIOError):
            read_container(tmp_path / "missing.ckpt")
