"""Shared fixtures: isolated state root, synthetic datasets and window sets."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import pytest

from bridge_bench.state import SessionState
from bridge_bench.vocab import default_vocabulary_path, load_vocabulary
from bridge_bench.windows import WindowSet

# Header sets per dataset: canonical names, aliases and one substring match.
DATASET_HEADERS: dict[int, list[str]] = {
    0: [
        "Flow Duration",
        "Total Fwd Packets",
        "Total Backward Packets",
        "Flow Bytes/s",
        "SYN Flag Count",
        "ACK Flag Count",
        "Fwd Header Length",
    ],
    1: ["dur", "spkts", "dpkts", "sbytes", "dbytes", "Flow IAT Mean"],
    2: ["flow_duration", "Packet Length Mean", "Packet Length Std", "rst_flag_cnt_total"],
    3: ["Flow Duration", "Idle Mean", "Active Mean"],
    4: ["Flow Duration", "tot_fwd_pkts", "Init Fwd Win Bytes", "Down/Up Ratio"],
}


@pytest.fixture(autouse=True)
def _isolated_state(tmp_path: Path, monkeypatch: pytest.MonkeyPatch):
    """Point the state root (runs, traces) at a per-test directory and pin threads."""
    monkeypatch.setenv("BRIDGE_HOME", str(tmp_path / ".bridge"))
    monkeypatch.setenv("BRIDGE_THREADS", "1")
    monkeypatch.delenv("BRIDGE_VOCABULARY", raising=False)


@pytest.fixture()
def session_state():
    """Fresh SessionState instance."""
    return SessionState()


@pytest.fixture(scope="session")
def vocab():
    return load_vocabulary(default_vocabulary_path())


def write_dataset_csv(
    path: Path,
    headers: list[str],
    labels: list[str],
    seed: int = 0,
    label_column: str = "Label",
) -> Path:
    """Random positive feature values, one row per label, time order = row order."""
    rng = np.random.default_rng(seed)
    values = rng.uniform(0.0, 1000.0, size=(len(labels), len(headers)))
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([*headers, label_column])
        for row, label in zip(values, labels, strict=True):
            writer.writerow([f"{v:.6f}" for v in row] + [label])
    return path


def block_labels(n: int, attack_from: int) -> list[str]:
    return ["BENIGN" if i < attack_from else "DoS" for i in range(n)]


def write_constant_pipeline(root: Path) -> Path:
    """One dataset of 200 identical rows (first half benign) and its pipeline config."""
    root.mkdir(parents=True, exist_ok=True)
    headers = DATASET_HEADERS[0]
    with open(root / "ds0.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([*headers, "Label"])
        for label in block_labels(200, 100):
            writer.writerow(["1.0"] * len(headers) + [label])
    config = "\n".join(
        [
            "window: {window: 32, stride: 4}",
            "datasets:",
            "  - dataset_id: 0",
            "    csv: ds0.csv",
            "    label_column: Label",
            "    benign_values: [BENIGN]",
        ]
    )
    (root / "pipeline.yaml").write_text(config + "\n", encoding="utf-8")
    return root / "pipeline.yaml"


@pytest.fixture()
def dataset_dir(tmp_path: Path) -> Path:
    """Five CSVs of 200 rows each (first half benign) plus a YAML pipeline config."""
    root = tmp_path / "data"
    entries = []
    for ds, headers in DATASET_HEADERS.items():
        write_dataset_csv(root / f"ds{ds}.csv", headers, block_labels(200, 100), seed=ds)
        entries.append(
            "\n".join(
                [
                    f"  - dataset_id: {ds}",
                    f"    name: DS{ds}",
                    f"    csv: ds{ds}.csv",
                    "    label_column: Label",
                    "    benign_values: [BENIGN]",
                    f"    device_category: {ds}",
                ]
            )
        )
    config = "\n".join(
        [
            "seed: 42",
            "window: {window: 32, stride: 4}",
            "split: {mode: stratified_random, train_fraction: 0.8}",
            "datasets:",
            *entries,
        ]
    )
    (root / "pipeline.yaml").write_text(config + "\n", encoding="utf-8")
    return root


@pytest.fixture()
def pipeline_config(dataset_dir: Path) -> Path:
    return dataset_dir / "pipeline.yaml"


def make_window_set(
    labels: list[int] | np.ndarray,
    dataset_ids: list[int] | np.ndarray | None = None,
    window: int = 4,
    features: int = 46,
    seed: int = 0,
) -> WindowSet:
    """Random windows with the given labels; origins are increasing start rows per dataset."""
    labels = np.asarray(labels, dtype=np.int8)
    n = len(labels)
    ds = np.zeros(n, dtype=np.int64) if dataset_ids is None else np.asarray(dataset_ids, dtype=np.int64)
    rng = np.random.default_rng(seed)
    starts = np.zeros(n, dtype=np.int64)
    for d in np.unique(ds):
        idx = np.flatnonzero(ds == d)
        starts[idx] = np.arange(len(idx)) * 4
    return WindowSet(
        features=rng.standard_normal((n, window, features)).astype(np.float32),
        labels=labels,
        contexts=np.stack([ds, ds % 6], axis=1),
        origins=np.stack([ds, starts], axis=1),
    )
