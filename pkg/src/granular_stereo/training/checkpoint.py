"""Single-file checkpoint container.

Layout: 8-byte magic, little-endian uint32 header length, a YAML header
record, then raw little-endian tensor blobs. The header holds the format
version, the step, an echo of the configuration and a table of
(name, dtype, shape, offset, nbytes) for every blob. Model tensors are
named ``model.<state key>``; optimizer moments ``optimizer.<index>.<key>``.
"""

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
import torch
import yaml

from granular_stereo.config.model import ModelConfig, TrainConfig
from granular_stereo.errors import BadHeader, CheckpointVersionError, DataIOError, ShapeMismatch, TruncatedFile
from granular_stereo.utils.fs_utils import safe_write_bytes

logger = logging.getLogger(__name__)

MAGIC = b"GSTCKPT\x00"
FORMAT_VERSION = 1
_LENGTH = struct.Struct("<I")

_DTYPES = {
    torch.float32: "float32",
    torch.float64: "float64",
    torch.float16: "float16",
    torch.int64: "int64",
    torch.int32: "int32",
    torch.uint8: "uint8",
    torch.bool: "bool",
}
_TORCH_DTYPES = {name: dtype for dtype, name in _DTYPES.items()}


@dataclass
class CheckpointContainer:
    """Decoded checkpoint.

    Attributes:
        format_version: Container version the file was written with.
        step: Completed optimizer steps.
        config: Echoed configuration, ``{"model": ..., "train": ...}``.
        tensors: Named tensors in file order.
        optimizer_groups: Optimizer parameter groups, or None.
    """
    format_version: int
    step: int
    config: dict
    tensors: dict[str, torch.Tensor] = field(default_factory=dict)
    optimizer_groups: Optional[list[dict]] = None

    def model_config(self) -> ModelConfig:
        return ModelConfig.from_dict(self.config.get("model", {}))

    def train_config(self) -> Optional[TrainConfig]:
        train = self.config.get("train")
        return None if train is None else TrainConfig.from_dict(train)

    def with_prefix(self, prefix: str) -> dict[str, torch.Tensor]:
        """Tensors whose names start with ``prefix``, keyed by the remainder."""
        return {name[len(prefix):]: value for name, value in self.tensors.items() if name.startswith(prefix)}


def _plain(value: Any) -> Any:
    """Convert tuples to lists recursively so the YAML header stays in the safe subset."""
    if isinstance(value, dict):
        return {key: _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    return value


def encode_container(
    tensors: dict[str, torch.Tensor],
    step: int,
    config: dict,
    optimizer_groups: Optional[list[dict]] = None,
    format_version: int = FORMAT_VERSION,
) -> bytes:
    """Serialize named tensors and their header record."""
    table, blobs, offset = [], [], 0
    for name, tensor in tensors.items():
        tensor = tensor.detach().cpu().contiguous()
        if tensor.dtype not in _DTYPES:
            raise ValueError(f"Tensor '{name}' has unsupported dtype {tensor.dtype}")
        dtype = _DTYPES[tensor.dtype]
        blob = tensor.numpy().astype(np.dtype(dtype).newbyteorder("<"), copy=False).tobytes()
        table.append({"name": name, "dtype": dtype, "shape": list(tensor.shape), "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)

    header = {
        "format_version": format_version,
        "step": int(step),
        "config": _plain(config),
        "tensors": table,
    }
    if optimizer_groups is not None:
        header["optimizer_groups"] = _plain(optimizer_groups)
    header_bytes = yaml.safe_dump(header, sort_keys=False).encode("utf-8")
    return MAGIC + _LENGTH.pack(len(header_bytes)) + header_bytes + b"".join(blobs)


def decode_container(data: bytes, source: str = "<bytes>") -> CheckpointContainer:
    """Parse container bytes.

    Raises:
        BadHeader: If the magic or header record is malformed.
        CheckpointVersionError: If the format version is not supported.
        TruncatedFile: If the header or a blob runs past the end of the data.
    """
    if not data.startswith(MAGIC):
        raise BadHeader(f"{source} is not a granular-stereo checkpoint")
    start = len(MAGIC) + _LENGTH.size
    if len(data) < start:
        raise TruncatedFile(f"{source} ends inside the header length")
    (header_length,) = _LENGTH.unpack_from(data, len(MAGIC))
    if len(data) < start + header_length:
        raise TruncatedFile(f"{source} ends inside the header record")

    try:
        header = yaml.safe_load(data[start:start + header_length].decode("utf-8"))
    except (yaml.YAMLError, UnicodeDecodeError) as e:
        raise BadHeader(f"{source} has an unreadable header record: {e}") from e
    if not isinstance(header, dict) or "format_version" not in header:
        raise BadHeader(f"{source} header record has no format_version")

    version = header["format_version"]
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{source} was written with checkpoint format {version}; this build reads format {FORMAT_VERSION}"
        )

    payload = memoryview(data)[start + header_length:]
    tensors = {}
    for entry in header.get("tensors", []):
        end = entry["offset"] + entry["nbytes"]
        if end > len(payload):
            raise TruncatedFile(f"{source} ends inside tensor '{entry['name']}'")
        dtype = np.dtype(entry["dtype"]).newbyteorder("<")
        array = np.frombuffer(payload[entry["offset"]:end], dtype=dtype).reshape(entry["shape"])
        tensors[entry["name"]] = torch.from_numpy(array.astype(np.dtype(entry["dtype"]), copy=True))

    return CheckpointContainer(
        format_version=version,
        step=int(header.get("step", 0)),
        config=header.get("config") or {},
        tensors=tensors,
        optimizer_groups=header.get("optimizer_groups"),
    )


def read_container(path: Union[str, Path]) -> CheckpointContainer:
    """Read and decode a checkpoint file.

    Raises:
        DataIOError: If the file cannot be read.
    """
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise DataIOError(f"Cannot read checkpoint {path}: {e}") from e
    container = decode_container(data, str(path))
    logger.debug(f"Read checkpoint {path}: step {container.step}, {len(container.tensors)} tensors")
    return container


def _optimizer_tensors(optimizer: torch.optim.Optimizer) -> tuple[dict[str, torch.Tensor], list[dict]]:
    state = optimizer.state_dict()
    tensors = {}
    for index, moments in state["state"].items():
        for key, value in moments.items():
            tensors[f"optimizer.{index}.{key}"] = torch.as_tensor(value)
    return tensors, state["param_groups"]


def _restore_optimizer(optimizer: torch.optim.Optimizer, container: CheckpointContainer) -> None:
    groups = container.optimizer_groups
    if groups is None:
        logger.warning("Checkpoint holds no optimizer state; optimizer starts fresh")
        return
    state: dict[int, dict[str, torch.Tensor]] = {}
    for name, value in container.with_prefix("optimizer.").items():
        index, key = name.split(".", 1)
        state.setdefault(int(index), {})[key] = value
    restored = []
    for group in groups:
        group = dict(group)
        if "betas" in group:
            group["betas"] = tuple(group["betas"])
        restored.append(group)
    optimizer.load_state_dict({"state": state, "param_groups": restored})


def save_checkpoint(
    path: Union[str, Path],
    model: torch.nn.Module,
    step: int,
    train_config: Optional[TrainConfig] = None,
    optimizer: Optional[torch.optim.Optimizer] = None,
) -> None:
    """Write model (and optimizer) state with a config echo.

    Raises:
        DataIOError: If the file cannot be written.
    """
    tensors = {f"model.{name}": value for name, value in model.state_dict().items()}
    groups = None
    if optimizer is not None:
        optimizer_tensors, groups = _optimizer_tensors(optimizer)
        tensors.update(optimizer_tensors)

    config = {"model": model.config.to_dict()}
    if train_config is not None:
        config["train"] = train_config.to_dict()

    content = encode_container(tensors, step, config, groups)
    try:
        safe_write_bytes(Path(path), content)
    except OSError as e:
        raise DataIOError(f"Cannot write checkpoint {path}: {e}") from e
    logger.info(f"Saved checkpoint at step {step} to {path} ({len(content)} bytes)")


def load_checkpoint(
    path: Union[str, Path],
    model: Optional[torch.nn.Module] = None,
    optimizer: Optional[torch.optim.Optimizer] = None,
):
    """Restore a model from a checkpoint, building it from the config echo when not given.

    Returns:
        Tuple of (model, container).

    Raises:
        CheckpointVersionError: If the format version is unsupported.
        DataIOError: If the file cannot be read.
        ShapeMismatch: If the stored parameters do not fit the model.
    """
    from granular_stereo.model import StereoModel

    container = read_container(path)
    if model is None:
        model = StereoModel(container.model_config())
    try:
        model.load_state_dict(container.with_prefix("model."), strict=True)
    except RuntimeError as e:
        raise ShapeMismatch(f"Checkpoint {path} does not fit the model: {' '.join(str(e).split())}") from e
    if optimizer is not None:
        _restore_optimizer(optimizer, container)
    logger.info(f"Loaded checkpoint {path} at step {container.step}")
    return model, container
