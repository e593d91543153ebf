"""Pipeline configuration: state-root resolution and YAML/JSON config loading.

No numeric imports; pure filesystem + YAML.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from bridge_bench.errors import ConfigError
from bridge_bench.helpers import DEFAULT_SEED
from bridge_bench.vocab import DATASET_IDS, default_vocabulary_path

logger = logging.getLogger(__name__)

STATE_DIR_NAME = ".bridge"
DEVICE_CATEGORIES = range(6)
SPLIT_MODES = ("stratified_random", "temporal")

# ---------------------------------------------------------------------------
# Directory resolution
# ---------------------------------------------------------------------------


def resolve_state_root() -> Path:
    """Find the ``.bridge/`` directory.

    Resolution order:
    1. ``BRIDGE_HOME`` env var (if set)
    2. Walk up from CWD looking for existing ``.bridge/``
    3. Walk up from CWD looking for ``.git/`` (place ``.bridge/`` next to it)
    4. Fall back to CWD
    """
    env = os.environ.get("BRIDGE_HOME")
    if env:
        return Path(env)

    cwd = Path.cwd()

    for parent in [cwd, *cwd.parents]:
        candidate = parent / STATE_DIR_NAME
        if candidate.is_dir():
            return candidate
        if parent == parent.parent:
            break

    for parent in [cwd, *cwd.parents]:
        if (parent / ".git").is_dir():
            return parent / STATE_DIR_NAME
        if parent == parent.parent:
            break

    return cwd / STATE_DIR_NAME


# ---------------------------------------------------------------------------
# Config records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetConfig:
    """Ingest settings for one source dataset."""

    dataset_id: int
    csv: Path
    label_column: str
    benign_values: frozenset[str]
    name: str = ""
    alias_map: Path | None = None
    device_category: int = 0
    delimiter: str = ","

    @property
    def display_name(self) -> str:
        return self.name or f"dataset {self.dataset_id}"


@dataclass(frozen=True)
class PipelineConfig:
    seed: int
    vocabulary: Path
    datasets: tuple[DatasetConfig, ...]
    window: dict[str, int] = field(default_factory=dict)
    split: dict[str, Any] = field(default_factory=dict)
    source: Path | None = None

    @property
    def device_map(self) -> dict[int, int]:
        return {d.dataset_id: d.device_category for d in self.datasets}

    @property
    def names(self) -> dict[int, str]:
        return {d.dataset_id: d.display_name for d in self.datasets}

    def echo(self) -> dict[str, Any]:
        """JSON-safe copy for run manifests."""
        return {
            "seed": self.seed,
            "vocabulary": str(self.vocabulary),
            "window": dict(self.window),
            "split": dict(self.split),
            "datasets": [
                {
                    "dataset_id": d.dataset_id,
                    "name": d.name,
                    "csv": str(d.csv),
                    "label_column": d.label_column,
                    "benign_values": sorted(d.benign_values),
                    "alias_map": str(d.alias_map) if d.alias_map else None,
                    "device_category": d.device_category,
                    "delimiter": d.delimiter,
                }
                for d in self.datasets
            ],
        }


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def validate_dataset_entry(entry: Any, position: int) -> list[str]:
    """Validate one ``datasets`` entry. Returns a list of error strings (empty = valid)."""
    where = f"datasets[{position}]"
    if not isinstance(entry, dict):
        return [f"{where}: must be a mapping"]
    errors: list[str] = []
    if not _is_int(entry.get("dataset_id")) or entry["dataset_id"] not in DATASET_IDS:
        errors.append(f"{where}: 'dataset_id' must be an integer 0–4")
    if not isinstance(entry.get("csv"), str) or not entry["csv"]:
        errors.append(f"{where}: 'csv' must be a non-empty path")
    if not isinstance(entry.get("label_column"), str) or not entry["label_column"]:
        errors.append(f"{where}: 'label_column' must be a non-empty string")
    benign = entry.get("benign_values")
    if not isinstance(benign, list) or not benign or not all(isinstance(v, str) for v in benign):
        errors.append(f"{where}: 'benign_values' must be a non-empty list of strings")
    device = entry.get("device_category", 0)
    if not _is_int(device) or device not in DEVICE_CATEGORIES:
        errors.append(f"{where}: 'device_category' must be an integer 0–5")
    delimiter = entry.get("delimiter", ",")
    if not isinstance(delimiter, str) or len(delimiter) != 1:
        errors.append(f"{where}: 'delimiter' must be a single character")
    alias = entry.get("alias_map")
    if alias is not None and not isinstance(alias, str):
        errors.append(f"{where}: 'alias_map' must be a path")
    return errors


def validate_pipeline_config(data: Any) -> list[str]:
    """Validate a parsed pipeline config. Returns every problem at once."""
    if not isinstance(data, dict):
        return ["config must be a mapping"]
    errors: list[str] = []

    seed = data.get("seed", DEFAULT_SEED)
    if not _is_int(seed) or seed < 0:
        errors.append("'seed' must be a non-negative integer")

    window = data.get("window", {})
    if not isinstance(window, dict):
        errors.append("'window' must be a mapping")
    else:
        for key in ("window", "stride", "train_cap", "test_cap"):
            if key in window and not _is_int(window[key]):
                errors.append(f"window.{key} must be an integer")

    split = data.get("split", {})
    if not isinstance(split, dict):
        errors.append("'split' must be a mapping")
    else:
        mode = split.get("mode", "stratified_random")
        if mode not in SPLIT_MODES:
            errors.append(f"split.mode must be one of {', '.join(SPLIT_MODES)}")
        fraction = split.get("train_fraction", 0.8)
        if not isinstance(fraction, (int, float)) or not 0 < fraction < 1:
            errors.append("split.train_fraction must be in (0, 1)")

    datasets = data.get("datasets")
    if not isinstance(datasets, list) or not datasets:
        errors.append("'datasets' must be a non-empty list")
        return errors
    ids: list[int] = []
    for i, entry in enumerate(datasets):
        errors.extend(validate_dataset_entry(entry, i))
        if isinstance(entry, dict) and _is_int(entry.get("dataset_id")):
            ids.append(entry["dataset_id"])
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        errors.append(f"duplicate dataset_id(s): {dupes}")
    return errors


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------


def _resolve(base: Path, raw: str) -> Path:
    p = Path(raw).expanduser()
    return p if p.is_absolute() else (base / p)


def _dataset_from_entry(entry: dict[str, Any], base: Path) -> DatasetConfig:
    alias = entry.get("alias_map")
    return DatasetConfig(
        dataset_id=entry["dataset_id"],
        name=str(entry.get("name", "")),
        csv=_resolve(base, entry["csv"]),
        label_column=entry["label_column"],
        benign_values=frozenset(v.strip() for v in entry["benign_values"]),
        alias_map=_resolve(base, alias) if alias else None,
        device_category=entry.get("device_category", 0),
        delimiter=entry.get("delimiter", ","),
    )


def load_pipeline_config(path: str | Path) -> PipelineConfig:
    """Load a YAML (or JSON) pipeline config.

    Raises ``FileNotFoundError`` if the file doesn't exist.
    Raises :class:`ConfigError` listing every validation problem.
    """
    file_path = Path(path)
    if not file_path.exists():
        raise FileNotFoundError(f"Config file not found: {file_path}")
    try:
        data = yaml.safe_load(file_path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"Cannot parse {file_path}: {exc}") from None

    errors = validate_pipeline_config(data)
    if errors:
        raise ConfigError(f"Invalid config {file_path}: {'; '.join(errors)}")

    base = file_path.resolve().parent
    vocab = data.get("vocabulary")
    datasets = tuple(
        sorted((_dataset_from_entry(e, base) for e in data["datasets"]), key=lambda d: d.dataset_id)
    )
    logger.info("Loaded config %s with %d dataset(s)", file_path, len(datasets))
    return PipelineConfig(
        seed=data.get("seed", DEFAULT_SEED),
        vocabulary=_resolve(base, vocab) if vocab else default_vocabulary_path(),
        datasets=datasets,
        window=dict(data.get("window", {})),
        split=dict(data.get("split", {})),
        source=file_path,
    )


def load_ingest_config(path: str | Path, csv: str | Path) -> DatasetConfig:
    """Load a per-dataset JSON ingest config (``dataset_id``, ``label_column``, ``benign_values``)."""
    file_path = Path(path)
    if not file_path.exists():
        raise FileNotFoundError(f"Ingest config not found: {file_path}")
    try:
        data = json.loads(file_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"Cannot parse {file_path} at line {exc.lineno}: {exc.msg}") from None
    if isinstance(data, dict):
        data = {**data, "csv": str(csv)}
    errors = validate_dataset_entry(data, 0)
    if errors:
        raise ConfigError(f"Invalid ingest config {file_path}: {'; '.join(e.split(': ', 1)[1] for e in errors)}")
    return _dataset_from_entry(data, Path.cwd())
