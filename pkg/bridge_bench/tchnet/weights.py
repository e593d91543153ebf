"""Named weight tensors, seeded fixture initialisation and the BRIDGE-WEIGHTS v1 file.

File layout (little-endian)::

    b"BRIDGE-WEIGHTS v1\\n"
    u32 count
    count × { u32 name_len, name (UTF-8), u32 rank, u32 dims[rank], f32 data[prod(dims)] }
    u32 json_len, JSON {"conventions": {...}, "config": {...}}
"""

from __future__ import annotations

import json
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import torch

from bridge_bench.errors import DataError
from bridge_bench.tchnet.config import Conventions, ModelConfig
from bridge_bench.tchnet.model import TCHNet

logger = logging.getLogger(__name__)

WEIGHTS_MAGIC = b"BRIDGE-WEIGHTS v1\n"
INIT_RANGE = 0.05
_SKIPPED_BUFFERS = ("num_batches_tracked",)


def inventory(model: torch.nn.Module) -> OrderedDict[str, tuple[int, ...]]:
    """Every parameter and running statistic the kernel loads, in state-dict order."""
    return OrderedDict(
        (name, tuple(t.shape))
        for name, t in model.state_dict().items()
        if not name.endswith(_SKIPPED_BUFFERS)
    )


@dataclass
class WeightStore:
    tensors: OrderedDict[str, np.ndarray] = field(default_factory=OrderedDict)
    conventions: Conventions = field(default_factory=Conventions)
    config: ModelConfig = field(default_factory=ModelConfig)

    def __len__(self) -> int:
        return len(self.tensors)

    def validate(self, model: torch.nn.Module | None = None) -> list[str]:
        """Compare against the model's inventory. Returns error strings (empty = valid)."""
        model = model if model is not None else TCHNet(self.config, self.conventions)
        expected = inventory(model)
        errors = [f"missing tensor: {name}" for name in expected if name not in self.tensors]
        for name, arr in self.tensors.items():
            if name not in expected:
                errors.append(f"unexpected tensor: {name}")
            elif tuple(arr.shape) != expected[name]:
                errors.append(f"{name}: dims {tuple(arr.shape)} ≠ {expected[name]}")
        return errors


# ---------------------------------------------------------------------------
# Building
# ---------------------------------------------------------------------------


def init_weights(
    cfg: ModelConfig | None = None, conventions: Conventions | None = None, seed: int = 42
) -> WeightStore:
    """Seeded uniform(−0.05, 0.05) fixture weights; batch-norm running mean 0, variance 1."""
    cfg = cfg or ModelConfig()
    conventions = conventions or Conventions()
    rng = np.random.default_rng(seed)
    tensors: OrderedDict[str, np.ndarray] = OrderedDict()
    for name, shape in inventory(TCHNet(cfg, conventions)).items():
        if name.endswith("running_mean"):
            tensors[name] = np.zeros(shape, dtype=np.float32)
        elif name.endswith("running_var"):
            tensors[name] = np.ones(shape, dtype=np.float32)
        else:
            tensors[name] = rng.uniform(-INIT_RANGE, INIT_RANGE, size=shape).astype(np.float32)
    return WeightStore(tensors, conventions, cfg)


def build_model(store: WeightStore) -> TCHNet:
    """Instantiate TCH-Net in inference mode with *store* loaded."""
    model = TCHNet(store.config, store.conventions)
    errors = store.validate(model)
    if errors:
        raise DataError("weights do not match the model: " + "; ".join(errors[:5]))
    state = model.state_dict()
    for name, arr in store.tensors.items():
        state[name] = torch.from_numpy(np.array(arr, dtype=np.float32))
    model.load_state_dict(state)
    return model.eval()


# ---------------------------------------------------------------------------
# File format
# ---------------------------------------------------------------------------


def _u32(*values: int) -> bytes:
    return np.asarray(values, dtype="<u4").tobytes()


def weights_bytes(store: WeightStore) -> bytes:
    parts = [WEIGHTS_MAGIC, _u32(len(store.tensors))]
    for name, arr in store.tensors.items():
        encoded = name.encode("utf-8")
        data = np.ascontiguousarray(arr, dtype="<f4")
        parts += [_u32(len(encoded)), encoded, _u32(data.ndim, *data.shape), data.tobytes()]
    trailer = json.dumps(
        {"conventions": store.conventions.to_dict(), "config": store.config.to_dict()}, sort_keys=True
    ).encode("utf-8")
    parts += [_u32(len(trailer)), trailer]
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes, source: str) -> None:
        self.data = data
        self.source = source
        self.offset = 0

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.data):
            raise DataError(f"{self.source}: truncated at byte {self.offset}")
        chunk = self.data[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def u32(self, count: int = 1) -> list[int]:
        return [int(v) for v in np.frombuffer(self.take(4 * count), dtype="<u4")]


def parse_weights(data: bytes, source: str = "<bytes>") -> WeightStore:
    if not data.startswith(WEIGHTS_MAGIC):
        raise DataError(f"{source}: not a BRIDGE-WEIGHTS v1 file")
    reader = _Reader(data, source)
    reader.take(len(WEIGHTS_MAGIC))
    (count,) = reader.u32()
    tensors: OrderedDict[str, np.ndarray] = OrderedDict()
    for _ in range(count):
        (name_len,) = reader.u32()
        name = reader.take(name_len).decode("utf-8")
        if name in tensors:
            raise DataError(f"{source}: duplicate tensor {name}")
        (rank,) = reader.u32()
        dims = tuple(reader.u32(rank)) if rank else ()
        size = int(np.prod(dims, dtype=np.int64))
        tensors[name] = np.frombuffer(reader.take(4 * size), dtype="<f4").reshape(dims).astype(np.float32)
    (json_len,) = reader.u32()
    try:
        meta: dict[str, Any] = json.loads(reader.take(json_len).decode("utf-8"))
    except json.JSONDecodeError as e:
        raise DataError(f"{source}: bad trailing JSON block: {e}") from e
    if reader.offset != len(data):
        raise DataError(f"{source}: {len(data) - reader.offset} trailing bytes")
    return WeightStore(
        tensors,
        Conventions.from_dict(meta.get("conventions", {})),
        ModelConfig.from_dict(meta.get("config", {})),
    )


def save_weights(store: WeightStore, path: str | Path) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(weights_bytes(store))
    logger.info("Wrote %d tensors to %s", len(store), out)
    return out


def load_weights(path: str | Path) -> WeightStore:
    file_path = Path(path)
    if not file_path.exists():
        raise FileNotFoundError(f"Weights file not found: {file_path}")
    return parse_weights(file_path.read_bytes(), str(file_path))
