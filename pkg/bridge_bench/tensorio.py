"""BRIDGE-TENSOR v1 container plus JSON sidecars for window sets and matrices.

Layout (all little-endian)::

    b"BRIDGE-TENSOR v1\\n"
    u32 rank
    u32 dims[rank]
    f32 payload[prod(dims)]
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

from bridge_bench.errors import DataError
from bridge_bench.ingest import CanonicalMatrix
from bridge_bench.windows import WindowSet

TENSOR_MAGIC = b"BRIDGE-TENSOR v1\n"
TENSOR_SUFFIX = ".bt"
SIDECAR_SUFFIX = ".json"


def tensor_bytes(array: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(array, dtype="<f4")
    header = np.asarray([arr.ndim, *arr.shape], dtype="<u4").tobytes()
    return TENSOR_MAGIC + header + arr.tobytes()


def parse_tensor(data: bytes, source: str = "<bytes>") -> np.ndarray:
    if not data.startswith(TENSOR_MAGIC):
        raise DataError(f"{source}: not a BRIDGE-TENSOR v1 file")
    offset = len(TENSOR_MAGIC)
    if len(data) < offset + 4:
        raise DataError(f"{source}: truncated header")
    rank = int(np.frombuffer(data, dtype="<u4", count=1, offset=offset)[0])
    offset += 4
    if len(data) < offset + 4 * rank:
        raise DataError(f"{source}: truncated dims")
    dims = tuple(int(d) for d in np.frombuffer(data, dtype="<u4", count=rank, offset=offset))
    offset += 4 * rank
    expected = 4 * int(np.prod(dims, dtype=np.int64))
    if len(data) - offset != expected:
        raise DataError(f"{source}: payload is {len(data) - offset} bytes, dims {dims} need {expected}")
    return np.frombuffer(data, dtype="<f4", offset=offset).reshape(dims).astype(np.float32)


def write_tensor(path: str | Path, array: np.ndarray) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(tensor_bytes(array))
    return out


def read_tensor(path: str | Path) -> np.ndarray:
    file_path = Path(path)
    if not file_path.exists():
        raise FileNotFoundError(f"Tensor file not found: {file_path}")
    return parse_tensor(file_path.read_bytes(), str(file_path))


def _paths(stem: str | Path) -> tuple[Path, Path]:
    base = str(stem)
    return Path(base + TENSOR_SUFFIX), Path(base + SIDECAR_SUFFIX)


def _write_sidecar(path: Path, payload: dict[str, Any]) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_sidecar(path: Path) -> dict[str, Any]:
    if not path.exists():
        raise FileNotFoundError(f"Sidecar not found: {path}")
    return json.loads(path.read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Window sets
# ---------------------------------------------------------------------------


def save_window_set(ws: WindowSet, stem: str | Path, meta: dict[str, Any] | None = None) -> list[Path]:
    """Write ``<stem>.bt`` features and ``<stem>.json`` labels/contexts/origins plus *meta*."""
    tensor_path, sidecar_path = _paths(stem)
    write_tensor(tensor_path, ws.features)
    _write_sidecar(
        sidecar_path,
        {
            "kind": "window_set",
            "counts": ws.label_counts(),
            "labels": ws.labels.astype(int).tolist(),
            "contexts": ws.contexts.astype(int).tolist(),
            "origins": ws.origins.astype(int).tolist(),
            "meta": meta or {},
        },
    )
    return [tensor_path, sidecar_path]


def load_window_set(stem: str | Path) -> tuple[WindowSet, dict[str, Any]]:
    tensor_path, sidecar_path = _paths(stem)
    features = read_tensor(tensor_path)
    side = _read_sidecar(sidecar_path)
    if side.get("kind") != "window_set":
        raise DataError(f"{sidecar_path}: not a window-set sidecar")
    n = features.shape[0] if features.ndim else 0
    if features.ndim != 3 or len(side["labels"]) != n:
        raise DataError(f"{tensor_path}: features and sidecar disagree")
    ws = WindowSet(
        features=features,
        labels=np.asarray(side["labels"], dtype=np.int8).reshape(n),
        contexts=np.asarray(side["contexts"], dtype=np.int64).reshape(n, 2),
        origins=np.asarray(side["origins"], dtype=np.int64).reshape(n, 2),
    )
    return ws, side.get("meta", {})


# ---------------------------------------------------------------------------
# Canonical matrices
# ---------------------------------------------------------------------------


def save_matrix(m: CanonicalMatrix, stem: str | Path, meta: dict[str, Any] | None = None) -> list[Path]:
    tensor_path, sidecar_path = _paths(stem)
    write_tensor(tensor_path, m.values)
    _write_sidecar(
        sidecar_path,
        {
            "kind": "canonical_matrix",
            "dataset_id": m.dataset_id,
            "labels": m.labels.astype(int).tolist(),
            "sanitation_count": m.sanitation_count,
            "zero_filled": list(m.zero_filled),
            "meta": meta or {},
        },
    )
    return [tensor_path, sidecar_path]


def load_matrix(stem: str | Path) -> CanonicalMatrix:
    tensor_path, sidecar_path = _paths(stem)
    values = read_tensor(tensor_path)
    side = _read_sidecar(sidecar_path)
    if side.get("kind") != "canonical_matrix":
        raise DataError(f"{sidecar_path}: not a canonical-matrix sidecar")
    return CanonicalMatrix(
        dataset_id=int(side["dataset_id"]),
        values=values,
        labels=np.asarray(side["labels"], dtype=np.int8),
        sanitation_count=int(side["sanitation_count"]),
        zero_filled=tuple(side.get("zero_filled", [])),
    )
