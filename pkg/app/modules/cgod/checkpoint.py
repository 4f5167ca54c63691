"""
Checkpoint codec for detector and projection-head parameters.

Layout: ``b"GCKP"``, a little-endian uint32 header length, a UTF-8 JSON
header (format, version, config echo, and per array its name, shape and
byte offset), then every array as little-endian float32 in header order.
"""

import json
import os
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np
import structlog
import torch
from torch import nn

from app.core.errors import ArtifactIOError, ConfigError
from app.utils.file_utils import ensure_dir
from app.utils.tensor_utils import DTYPE

logger = structlog.get_logger(__name__)

CHECKPOINT_MAGIC = b"GCKP"
CHECKPOINT_FORMAT = "guided-checkpoint"
CHECKPOINT_VERSION = 1


def collect_arrays(modules: Mapping[str, nn.Module]) -> Dict[str, np.ndarray]:
    """Named float32 arrays of every parameter, prefixed by module name."""
    arrays: Dict[str, np.ndarray] = {}
    for prefix, module in modules.items():
        for name, param in module.named_parameters():
            arrays[f"{prefix}.{name}"] = param.detach().cpu().numpy().astype("<f4")
    return arrays


def save_checkpoint(path: str, modules: Mapping[str, nn.Module], config: Optional[Dict[str, Any]] = None) -> None:
    arrays = collect_arrays(modules)
    entries = []
    offset = 0
    for name, array in arrays.items():
        entries.append({"name": name, "shape": list(array.shape), "offset": offset})
        offset += array.nbytes
    header = json.dumps(
        {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "config": config or {},
            "arrays": entries,
        },
        sort_keys=True,
    ).encode("utf-8")
    try:
        ensure_dir(os.path.dirname(os.path.abspath(path)))
        with open(path, "wb") as f:
            f.write(CHECKPOINT_MAGIC)
            f.write(np.array([len(header)], dtype="<u4").tobytes())
            f.write(header)
            for array in arrays.values():
                f.write(array.tobytes())
    except OSError as e:
        raise ArtifactIOError(f"Cannot write checkpoint {path}", error=str(e))
    logger.info("Checkpoint saved", path=path, arrays=len(entries))


def read_checkpoint(path: str) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    """Header and named arrays of a checkpoint file."""
    try:
        with open(path, "rb") as f:
            data = f.read()
    except FileNotFoundError:
        raise ArtifactIOError(f"Checkpoint not found: {path}")
    if data[:4] != CHECKPOINT_MAGIC:
        raise ArtifactIOError(f"Not a checkpoint file: {path}")
    (length,) = np.frombuffer(data, dtype="<u4", count=1, offset=4)
    start = 8 + int(length)
    try:
        header = json.loads(data[8:start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ArtifactIOError(f"Corrupt checkpoint header: {path}", error=str(e))
    if header.get("format") != CHECKPOINT_FORMAT or header.get("version") != CHECKPOINT_VERSION:
        raise ArtifactIOError("Unsupported checkpoint", path=path, version=header.get("version"))
    arrays = {}
    for entry in header["arrays"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        begin = start + entry["offset"]
        if begin + count * 4 > len(data):
            raise ArtifactIOError("Checkpoint is truncated", path=path, array=entry["name"])
        arrays[entry["name"]] = np.frombuffer(data, dtype="<f4", count=count, offset=begin).reshape(entry["shape"])
    return header, arrays


def load_checkpoint(path: str, modules: Mapping[str, nn.Module]) -> Dict[str, Any]:
    """Copy checkpoint arrays into the modules; shapes must match exactly."""
    header, arrays = read_checkpoint(path)
    expected = {
        f"{prefix}.{name}": param for prefix, module in modules.items() for name, param in module.named_parameters()
    }
    missing = sorted(set(expected) - set(arrays))
    unexpected = sorted(set(arrays) - set(expected))
    if missing or unexpected:
        raise ConfigError(
            "Checkpoint does not match the configured model",
            path=path,
            missing=missing[:5],
            unexpected=unexpected[:5],
        )
    with torch.no_grad():
        for name, param in expected.items():
            array = arrays[name]
            if tuple(array.shape) != tuple(param.shape):
                raise ConfigError("Checkpoint array shape mismatch", name=name, shape=array.shape)
            param.copy_(torch.from_numpy(array.astype(np.float64)).to(DTYPE))
    logger.info("Checkpoint loaded", path=path, arrays=len(arrays))
    return header.get("config", {})
