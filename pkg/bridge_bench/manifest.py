"""Run manifests: what a command read, what it wrote, and the digests binding them."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from datetime import UTC, datetime
from pathlib import Path
from typing import Any

from bridge_bench import __version__
from bridge_bench.config import resolve_state_root
from bridge_bench.hashing import file_digest

MANIFEST_SUFFIX = ".manifest.json"


@dataclass
class RunManifest:
    command: str
    config: dict[str, Any] = field(default_factory=dict)
    seeds: dict[str, int] = field(default_factory=dict)
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    version: str = __version__
    started: str = field(default_factory=lambda: datetime.now(UTC).isoformat())
    finished: str | None = None
    duration_s: float | None = None
    _t0: float = field(default_factory=time.monotonic, repr=False)

    def add_inputs(self, *paths: str | Path) -> None:
        for p in paths:
            self.inputs[str(p)] = file_digest(p)

    def finish(self, outputs: list[Path], base: Path) -> None:
        self.outputs = {_relative(p, base): file_digest(p) for p in outputs}
        self.finished = datetime.now(UTC).isoformat()
        self.duration_s = round(time.monotonic() - self._t0, 3)

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data.pop("_t0")
        return data


def _relative(path: Path, base: Path) -> str:
    try:
        return str(Path(path).resolve().relative_to(base.resolve()))
    except ValueError:
        return str(Path(path).resolve())


def manifest_path(out_dir: str | Path, command: str) -> Path:
    return Path(out_dir) / f"{command}{MANIFEST_SUFFIX}"


def resolve_out_dir(out_dir: str | Path | None, command: str) -> Path:
    """*out_dir* if given, else a fresh ``<state root>/runs/<command>-<UTC stamp>`` directory."""
    if out_dir:
        directory = Path(out_dir)
    else:
        stamp = datetime.now(UTC).strftime("%Y%m%dT%H%M%S%fZ")
        directory = resolve_state_root() / "runs" / f"{command}-{stamp}"
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def write_manifest(manifest: RunManifest, out_dir: str | Path, outputs: list[Path]) -> Path:
    """Digest *outputs* and write ``<out_dir>/<command>.manifest.json``."""
    directory = Path(out_dir)
    directory.mkdir(parents=True, exist_ok=True)
    manifest.finish(outputs, directory)
    path = manifest_path(directory, manifest.command)
    path.write_text(json.dumps(manifest.to_dict(), indent=2, default=str) + "\n", encoding="utf-8")
    return path


def verify_manifest(path: str | Path) -> list[str]:
    """Check every output named in a manifest. Returns a list of error strings (empty = valid)."""
    file_path = Path(path)
    if not file_path.exists():
        raise FileNotFoundError(f"Manifest not found: {file_path}")
    data = json.loads(file_path.read_text(encoding="utf-8"))
    base = file_path.parent
    errors: list[str] = []
    for name, digest in data.get("outputs", {}).items():
        target = Path(name) if Path(name).is_absolute() else base / name
        if not target.exists():
            errors.append(f"missing output: {name}")
        elif file_digest(target) != digest:
            errors.append(f"digest mismatch: {name}")
    return errors
