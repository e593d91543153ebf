"""CSV ingestion, binary labels, 1:1 class balancing and canonical matrices."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from bridge_bench.errors import DataError, DegenerateInputError, IngestError
from bridge_bench.helpers import ordered_map
from bridge_bench.rng import select_subset
from bridge_bench.vocab import SLOT_COUNT, MappingReport

logger = logging.getLogger(__name__)

MIN_PER_CLASS = 5000
MAX_REJECTED_FRACTION = 0.01

# ---------------------------------------------------------------------------
# Data containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetTable:
    """Raw text cells of one dataset plus the binary label derived from the label column."""

    dataset_id: int
    headers: tuple[str, ...]
    rows: pd.DataFrame
    labels: np.ndarray
    label_column: str
    benign_values: frozenset[str]
    rejected_lines: tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def feature_headers(self) -> list[str]:
        """Headers eligible for slot matching (the label column never is)."""
        return [h for h in self.headers if h != self.label_column]

    def class_counts(self) -> tuple[int, int]:
        attack = int(self.labels.sum())
        return len(self.labels) - attack, attack

    def take(self, indices: np.ndarray) -> DatasetTable:
        return replace(
            self,
            rows=self.rows.iloc[indices].reset_index(drop=True),
            labels=self.labels[indices],
        )


@dataclass(frozen=True)
class CanonicalMatrix:
    dataset_id: int
    values: np.ndarray
    labels: np.ndarray
    sanitation_count: int = 0
    zero_filled: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.values.ndim != 2 or self.values.shape[1] != SLOT_COUNT:
            raise ValueError(f"canonical matrix must be N×{SLOT_COUNT}, got {self.values.shape}")
        if len(self.labels) != self.values.shape[0]:
            raise ValueError("labels and values disagree on row count")

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class StackedMatrix:
    """Rows of several canonical matrices, concatenated in dataset order."""

    values: np.ndarray
    labels: np.ndarray
    dataset_ids: np.ndarray
    sanitation_count: int = 0


@dataclass(frozen=True)
class RecordCount:
    dataset_id: int | None
    name: str
    benign: int
    attack: int
    total: int = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "total", self.benign + self.attack)

    @property
    def attack_percent(self) -> float:
        return 100.0 * self.attack / self.total if self.total else 0.0

    def to_dict(self) -> dict[str, object]:
        return {
            "dataset_id": self.dataset_id,
            "name": self.name,
            "benign": self.benign,
            "attack": self.attack,
            "total": self.total,
            "attack_percent": round(self.attack_percent, 1),
        }


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def _dedupe_headers(headers: list[str]) -> list[str]:
    seen: dict[str, int] = {}
    out: list[str] = []
    for h in headers:
        if h in seen:
            seen[h] += 1
            renamed = f"{h}.{seen[h]}"
            logger.warning("Duplicate header %r renamed to %r", h, renamed)
            out.append(renamed)
        else:
            seen[h] = 0
            out.append(h)
    return out


def read_header_row(path: str | Path, delimiter: str = ",") -> list[str]:
    """Header row only, stripped and deduplicated the same way :func:`parse_csv` does."""
    file_path = Path(path)
    if not file_path.exists():
        raise FileNotFoundError(f"CSV file not found: {file_path}")
    with open(file_path, newline="", encoding="utf-8-sig") as fh:
        try:
            header_row = next(csv.reader(fh, delimiter=delimiter))
        except StopIteration:
            raise IngestError(f"{file_path}: empty file") from None
    return _dedupe_headers([h.strip() for h in header_row])


def parse_csv(
    path: str | Path,
    label_column: str,
    benign_values: set[str] | frozenset[str],
    *,
    dataset_id: int = 0,
    delimiter: str = ",",
) -> DatasetTable:
    """Parse an RFC-4180 CSV file into a :class:`DatasetTable`.

    Rows whose cell count differs from the header are rejected and reported
    by line number; more than 1% rejected rows aborts the parse.
    """
    file_path = Path(path)
    if not file_path.exists():
        raise FileNotFoundError(f"CSV file not found: {file_path}")

    with open(file_path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header_row = next(reader)
        except StopIteration:
            raise IngestError(f"{file_path}: empty file") from None
        headers = _dedupe_headers([h.strip() for h in header_row])
        label = label_column.strip()
        if label not in headers:
            raise IngestError(f"{file_path}: label column {label_column!r} not found")

        records: list[list[str]] = []
        rejected: list[int] = []
        for row in reader:
            if not row:
                continue
            if len(row) != len(headers):
                rejected.append(reader.line_num)
                continue
            records.append(row)

    total = len(records) + len(rejected)
    if rejected:
        shown = ", ".join(str(n) for n in rejected[:10])
        more = f" (+{len(rejected) - 10} more)" if len(rejected) > 10 else ""
        summary = f"{len(rejected)} of {total} row(s) with wrong arity at line(s) {shown}{more}"
        if len(rejected) > MAX_REJECTED_FRACTION * total:
            raise IngestError(f"{file_path}: too many malformed rows: {summary}", rejected)
        logger.warning("%s: rejected %s", file_path, summary)

    frame = pd.DataFrame(records, columns=headers, dtype=str)
    benign = frozenset(v.strip() for v in benign_values)
    labels = np.fromiter(
        (0 if cell.strip() in benign else 1 for cell in frame[label]), dtype=np.int8, count=len(frame)
    )
    logger.info("Parsed %s: %d row(s), %d header(s)", file_path, len(frame), len(headers))
    return DatasetTable(
        dataset_id=dataset_id,
        headers=tuple(headers),
        rows=frame,
        labels=labels,
        label_column=label,
        benign_values=benign,
        rejected_lines=tuple(rejected),
    )


# ---------------------------------------------------------------------------
# Balancing
# ---------------------------------------------------------------------------


def balance_target(majority: int, minority: int) -> int:
    """Rows kept from the majority class: never below 5,000 nor below the minority count."""
    return min(majority, max(minority, MIN_PER_CLASS))


def balance_classes(table: DatasetTable, seed: int) -> DatasetTable:
    """Subsample the majority class with a seeded Fisher–Yates selection.

    The minority class is never touched and row order is preserved.
    """
    benign, attack = table.class_counts()
    if benign == 0 or attack == 0:
        raise DegenerateInputError("degenerate: single-class dataset")
    if benign == attack:
        return table

    majority_label = 0 if benign > attack else 1
    majority_rows = np.flatnonzero(table.labels == majority_label)
    target = balance_target(len(majority_rows), min(benign, attack))
    if target >= len(majority_rows):
        return table

    kept_majority = majority_rows[select_subset(len(majority_rows), target, seed)]
    keep = np.sort(np.concatenate([kept_majority, np.flatnonzero(table.labels != majority_label)]))
    logger.info(
        "dataset %d: balanced %d/%d -> %d/%d (benign/attack)",
        table.dataset_id,
        benign,
        attack,
        *((target, attack) if majority_label == 0 else (benign, target)),
    )
    return table.take(keep)


# ---------------------------------------------------------------------------
# Canonical matrix
# ---------------------------------------------------------------------------


def _parse_column(cells: pd.Series) -> tuple[np.ndarray, int]:
    parsed = pd.to_numeric(cells.str.strip(), errors="coerce").to_numpy(dtype=np.float64, na_value=np.nan)
    with np.errstate(over="ignore", invalid="ignore"):
        narrowed = parsed.astype(np.float32)
    bad = ~np.isfinite(narrowed)
    narrowed[bad] = 0.0
    return narrowed, int(bad.sum())


def build_canonical_matrix(table: DatasetTable, report: MappingReport) -> CanonicalMatrix:
    """Project a table onto the 46 canonical slots.

    Non-numeric, NaN, infinite and single-precision-overflow cells become 0
    and are counted in ``sanitation_count``.
    """
    if report.dataset_id != table.dataset_id:
        raise ValueError(f"report is for dataset {report.dataset_id}, table is dataset {table.dataset_id}")

    values = np.zeros((len(table), SLOT_COUNT), dtype=np.float32)
    matched = [(o.slot, o.column) for o in report.outcomes if o.column is not None]
    missing = [col for _, col in matched if col not in table.rows.columns]
    if missing:
        raise ValueError(f"report names columns absent from the table: {missing}")

    columns = ordered_map(lambda item: _parse_column(table.rows[item[1]]), matched)
    sanitized = 0
    for (slot, _), (column, bad) in zip(matched, columns, strict=True):
        values[:, slot] = column
        sanitized += bad
    if sanitized:
        logger.warning("dataset %d: sanitised %d non-finite or non-numeric cell(s)", table.dataset_id, sanitized)

    return CanonicalMatrix(
        dataset_id=table.dataset_id,
        values=values,
        labels=table.labels.copy(),
        sanitation_count=sanitized,
        zero_filled=tuple(report.zero_filled),
    )


def attack_fraction(m: CanonicalMatrix) -> float:
    if len(m) == 0:
        raise DataError("attack fraction of an empty matrix")
    return float(np.count_nonzero(m.labels == 1)) / len(m)


def concat_matrices(matrices: list[CanonicalMatrix]) -> StackedMatrix:
    """Stack matrices in ascending ``dataset_id`` order."""
    if not matrices:
        raise ValueError("nothing to concatenate")
    ordered = sorted(matrices, key=lambda m: m.dataset_id)
    return StackedMatrix(
        values=np.concatenate([m.values for m in ordered]),
        labels=np.concatenate([m.labels for m in ordered]),
        dataset_ids=np.concatenate([np.full(len(m), m.dataset_id, dtype=np.int64) for m in ordered]),
        sanitation_count=sum(m.sanitation_count for m in ordered),
    )


def record_counts(matrices: list[CanonicalMatrix], names: dict[int, str] | None = None) -> list[RecordCount]:
    """Post-balancing record counts per dataset, followed by a combined row."""
    names = names or {}
    rows = []
    for m in sorted(matrices, key=lambda m: m.dataset_id):
        attack = int(np.count_nonzero(m.labels == 1))
        rows.append(RecordCount(m.dataset_id, names.get(m.dataset_id, f"dataset {m.dataset_id}"), len(m) - attack, attack))
    rows.append(RecordCount(None, "Combined", sum(r.benign for r in rows), sum(r.attack for r in rows)))
    return rows


def render_counts(rows: list[RecordCount]) -> str:
    lines = [f"{'Dataset':<16} {'Benign':>10} {'Attack':>10} {'Total':>10} {'Atk%':>6}"]
    for r in rows:
        lines.append(f"{r.name:<16} {r.benign:>10,} {r.attack:>10,} {r.total:>10,} {r.attack_percent:>5.1f}%")
    return "\n".join(lines)


def zero_fill_audit(m: CanonicalMatrix) -> list[int]:
    """Zero-filled slots that are not identically zero (empty list = audit passed)."""
    return [s for s in m.zero_filled if len(m) and (m.values[:, s].max() != 0 or m.values[:, s].min() != 0)]
