"""Canonical 46-slot feature vocabulary and three-stage alias mapping.

Pure functions over frozen dataclasses; no I/O beyond the two loaders.
Matching stages, highest priority first:

1. header equals the slot name (case-insensitive, surrounding whitespace ignored)
2. header equals one of the slot's aliases
3. one of the slot's aliases (≥ 5 characters) is a substring of the header

Stages are resolved globally in that order, and within a stage slots are
visited in index order; a header is claimed by the first slot that takes it.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from bridge_bench.errors import ConfigError, VocabularyError

logger = logging.getLogger(__name__)

SLOT_COUNT = 46
GROUP_RANGES: dict[int, tuple[int, int]] = {1: (0, 16), 2: (17, 37), 3: (38, 43), 4: (44, 45)}
MIN_SUBSTRING_ALIAS = 5
DATASET_IDS = range(5)

DEFAULT_VOCABULARY = Path(__file__).parent / "data" / "vocabulary.json"


def default_vocabulary_path() -> Path:
    """Shipped vocabulary, unless ``BRIDGE_VOCABULARY`` points elsewhere."""
    env = os.environ.get("BRIDGE_VOCABULARY")
    return Path(env) if env else DEFAULT_VOCABULARY


def _fold(text: str) -> str:
    return text.strip().casefold()


def group_of(index: int) -> int:
    for group, (lo, hi) in GROUP_RANGES.items():
        if lo <= index <= hi:
            return group
    raise ValueError(f"slot index {index} outside 0–{SLOT_COUNT - 1}")


# ---------------------------------------------------------------------------
# Data containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CanonicalSlot:
    index: int
    name: str
    group: int
    aliases: tuple[str, ...] = ()


@dataclass(frozen=True)
class CanonicalVocabulary:
    slots: tuple[CanonicalSlot, ...]
    version: str = ""

    def __len__(self) -> int:
        return len(self.slots)

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.slots]

    def group_sizes(self) -> dict[int, int]:
        sizes = dict.fromkeys(GROUP_RANGES, 0)
        for slot in self.slots:
            sizes[slot.group] += 1
        return sizes


@dataclass(frozen=True)
class SlotOverride:
    slot: int
    aliases: tuple[str, ...] = ()
    exclude: tuple[str, ...] = ()


@dataclass(frozen=True)
class AliasMap:
    """Per-dataset additions to the vocabulary aliases plus barred headers."""

    dataset_id: int
    overrides: tuple[SlotOverride, ...] = ()

    def __post_init__(self) -> None:
        if self.dataset_id not in DATASET_IDS:
            raise ConfigError(f"alias map dataset_id must be 0–4, got {self.dataset_id}")
        for ov in self.overrides:
            if not 0 <= ov.slot < SLOT_COUNT:
                raise ConfigError(f"alias map for dataset {self.dataset_id} references invalid slot {ov.slot}")

    def extra_aliases(self, slot: int) -> list[str]:
        return [a for ov in self.overrides if ov.slot == slot for a in ov.aliases]

    def excluded(self, slot: int) -> set[str]:
        return {_fold(e) for ov in self.overrides if ov.slot == slot for e in ov.exclude}


@dataclass(frozen=True)
class SlotOutcome:
    slot: int
    name: str
    column: str | None = None
    stage: int | None = None

    @property
    def matched(self) -> bool:
        return self.column is not None

    def to_dict(self) -> dict[str, Any]:
        if self.column is None:
            return {"slot": self.slot, "name": self.name, "outcome": "zero_filled"}
        return {"slot": self.slot, "name": self.name, "outcome": "matched", "column": self.column, "stage": self.stage}


@dataclass(frozen=True)
class MappingReport:
    dataset_id: int
    outcomes: tuple[SlotOutcome, ...]
    ambiguity_flags: tuple[tuple[int, tuple[str, ...]], ...] = field(default=())

    @property
    def matched_count(self) -> int:
        return sum(1 for o in self.outcomes if o.matched)

    @property
    def coverage_percent(self) -> int:
        return percent_half_up(self.matched_count, SLOT_COUNT)

    @property
    def zero_filled(self) -> list[int]:
        return [o.slot for o in self.outcomes if not o.matched]

    def column_for(self, slot: int) -> str | None:
        return self.outcomes[slot].column

    def to_dict(self) -> dict[str, Any]:
        return {
            "dataset_id": self.dataset_id,
            "matched_count": self.matched_count,
            "coverage_percent": self.coverage_percent,
            "slots": [o.to_dict() for o in self.outcomes],
            "ambiguity_flags": [{"slot": s, "columns": list(cols)} for s, cols in self.ambiguity_flags],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> MappingReport:
        outcomes = tuple(
            SlotOutcome(slot=o["slot"], name=o["name"], column=o.get("column"), stage=o.get("stage"))
            for o in data["slots"]
        )
        flags = tuple((f["slot"], tuple(f["columns"])) for f in data.get("ambiguity_flags", []))
        return cls(dataset_id=int(data["dataset_id"]), outcomes=outcomes, ambiguity_flags=flags)


@dataclass(frozen=True)
class CoverageRow:
    dataset_id: int
    matched: int
    coverage_percent: int


def percent_half_up(part: int, whole: int) -> int:
    """``round(100 · part / whole)`` with halves rounded up, in exact integer arithmetic."""
    return (200 * part + whole) // (2 * whole)


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------


def _slot_lines(text: str) -> list[int]:
    """1-based line of each entry in the ``slots`` array, via the YAML node composer.

    JSON is valid YAML flow syntax, so composing the document gives source
    marks without a second parser. Returns ``[]`` when composition fails.
    """
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return []
    if not isinstance(root, yaml.MappingNode):
        return []
    for key, value in root.value:
        if key.value == "slots" and isinstance(value, yaml.SequenceNode):
            return [item.start_mark.line + 1 for item in value.value]
    return []


def _parse_slot(raw: Any, position: int, line: int | None) -> CanonicalSlot:
    if not isinstance(raw, dict):
        raise VocabularyError("slot entry must be an object", slot=position, line=line)
    index, name, group, aliases = raw.get("index"), raw.get("name"), raw.get("group"), raw.get("aliases", [])
    if not isinstance(index, int) or isinstance(index, bool):
        raise VocabularyError("slot 'index' must be an integer", slot=position, line=line)
    if not isinstance(name, str) or not name.strip():
        raise VocabularyError("slot 'name' must be a non-empty string", slot=index, line=line)
    if not isinstance(group, int) or group not in GROUP_RANGES:
        raise VocabularyError(f"slot 'group' must be 1–4, got {group!r}", slot=index, line=line)
    if not isinstance(aliases, list) or not all(isinstance(a, str) for a in aliases):
        raise VocabularyError("slot 'aliases' must be a list of strings", slot=index, line=line)
    seen: set[str] = set()
    for alias in aliases:
        folded = _fold(alias)
        if not folded:
            raise VocabularyError("empty alias", slot=index, line=line)
        if folded in seen:
            raise VocabularyError(f"duplicate alias {alias!r}", slot=index, line=line)
        seen.add(folded)
    return CanonicalSlot(index=index, name=name.strip(), group=group, aliases=tuple(a.strip() for a in aliases))


def load_vocabulary(path: str | Path) -> CanonicalVocabulary:
    """Load and validate a vocabulary file.

    Raises ``FileNotFoundError`` if the file doesn't exist and
    :class:`VocabularyError` for parse failures or invariant violations.
    """
    file_path = Path(path)
    if not file_path.exists():
        raise FileNotFoundError(f"Vocabulary file not found: {file_path}")
    text = file_path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise VocabularyError(f"parse failure in {file_path}: {exc.msg}", line=exc.lineno) from None
    if not isinstance(data, dict) or not isinstance(data.get("slots"), list):
        raise VocabularyError(f"{file_path}: expected an object with a 'slots' array")

    lines = _slot_lines(text)
    raw_slots = data["slots"]
    slots = [_parse_slot(raw, i, lines[i] if i < len(lines) else None) for i, raw in enumerate(raw_slots)]

    if len(slots) != SLOT_COUNT:
        raise VocabularyError(f"slot count {len(slots)} ≠ {SLOT_COUNT}")

    names: dict[str, int] = {}
    for position, slot in enumerate(slots):
        line = lines[position] if position < len(lines) else None
        if slot.index != position:
            raise VocabularyError(
                f"non-contiguous indices: expected {position}, found {slot.index}", slot=slot.index, line=line
            )
        if slot.group != group_of(slot.index):
            raise VocabularyError(
                f"group {slot.group} does not cover index {slot.index} (expected {group_of(slot.index)})",
                slot=slot.index,
                line=line,
            )
        folded = _fold(slot.name)
        if folded in names:
            raise VocabularyError(
                f"duplicate name {slot.name!r} (collides with slot {names[folded]})", slot=slot.index, line=line
            )
        names[folded] = slot.index

    version = data.get("version", "")
    return CanonicalVocabulary(slots=tuple(slots), version=str(version))


def load_alias_map(path: str | Path) -> AliasMap:
    file_path = Path(path)
    if not file_path.exists():
        raise FileNotFoundError(f"Alias map not found: {file_path}")
    try:
        data = json.loads(file_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"parse failure in {file_path} at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict) or "dataset_id" not in data:
        raise ConfigError(f"{file_path}: expected an object with 'dataset_id'")
    overrides = []
    for entry in data.get("overrides", []):
        if not isinstance(entry, dict) or not isinstance(entry.get("slot"), int):
            raise ConfigError(f"{file_path}: every override needs an integer 'slot'")
        aliases = tuple(a for a in entry.get("aliases", []) if isinstance(a, str) and a.strip())
        exclude = tuple(e for e in entry.get("exclude", []) if isinstance(e, str) and e.strip())
        overrides.append(SlotOverride(slot=entry["slot"], aliases=aliases, exclude=exclude))
    return AliasMap(dataset_id=int(data["dataset_id"]), overrides=tuple(overrides))


# ---------------------------------------------------------------------------
# Matching
# ---------------------------------------------------------------------------


def _stage_candidates(
    stage: int, name: str, aliases: list[str], headers: list[tuple[str, str]], barred: set[str]
) -> list[str]:
    if stage == 1:
        target = _fold(name)
        return [h for h, f in headers if f == target and f not in barred]
    if stage == 2:
        folded = {_fold(a) for a in aliases}
        return [h for h, f in headers if f in folded and f not in barred]
    long_aliases = [_fold(a) for a in aliases if len(_fold(a)) >= MIN_SUBSTRING_ALIAS]
    return [h for h, f in headers if f not in barred and any(a in f for a in long_aliases)]


def match_columns(vocab: CanonicalVocabulary, alias_map: AliasMap, headers: list[str]) -> MappingReport:
    """Map dataset headers onto canonical slots; see the module docstring for the rules."""
    if not headers:
        raise ValueError("headers must be non-empty")
    if len(set(headers)) != len(headers):
        dupes = sorted({h for h in headers if headers.count(h) > 1})
        raise ValueError(f"headers must be deduplicated; repeated: {dupes}")

    folded_headers = [(h, _fold(h)) for h in headers]
    claimed: set[str] = set()
    chosen: dict[int, tuple[str, int]] = {}
    flags: dict[int, tuple[str, ...]] = {}

    for stage in (1, 2, 3):
        for slot in vocab.slots:
            if slot.index in chosen:
                continue
            aliases = [*slot.aliases, *alias_map.extra_aliases(slot.index)]
            available = [(h, f) for h, f in folded_headers if h not in claimed]
            candidates = _stage_candidates(stage, slot.name, aliases, available, alias_map.excluded(slot.index))
            if not candidates:
                continue
            chosen[slot.index] = (candidates[0], stage)
            claimed.add(candidates[0])
            if len(candidates) > 1:
                flags[slot.index] = tuple(candidates)
                logger.warning(
                    "dataset %d slot %d (%s): %d candidates at stage %d, using %r",
                    alias_map.dataset_id,
                    slot.index,
                    slot.name,
                    len(candidates),
                    stage,
                    candidates[0],
                )

    outcomes = tuple(
        SlotOutcome(slot=s.index, name=s.name, column=chosen[s.index][0], stage=chosen[s.index][1])
        if s.index in chosen
        else SlotOutcome(slot=s.index, name=s.name)
        for s in vocab.slots
    )
    return MappingReport(
        dataset_id=alias_map.dataset_id,
        outcomes=outcomes,
        ambiguity_flags=tuple(sorted(flags.items())),
    )


def coverage_summary(reports: list[MappingReport]) -> list[CoverageRow]:
    """One row per dataset, ordered by ``dataset_id``."""
    seen: set[int] = set()
    for report in reports:
        if report.dataset_id in seen:
            raise ValueError(f"duplicate dataset_id {report.dataset_id} in coverage summary")
        seen.add(report.dataset_id)
    return [
        CoverageRow(r.dataset_id, r.matched_count, r.coverage_percent)
        for r in sorted(reports, key=lambda r: r.dataset_id)
    ]


def render_coverage(rows: list[CoverageRow], names: dict[int, str] | None = None) -> str:
    names = names or {}
    lines = [f"{'Dataset':<16} {'Matched / 46':>12} {'Coverage':>9}"]
    for row in rows:
        label = names.get(row.dataset_id, f"dataset {row.dataset_id}")
        lines.append(f"{label:<16} {row.matched:>12} {row.coverage_percent:>8}%")
    return "\n".join(lines)


def render_report(report: MappingReport) -> str:
    lines = [f"dataset {report.dataset_id}: {report.matched_count}/46 matched ({report.coverage_percent}%)"]
    for o in report.outcomes:
        target = f"{o.column!r} (stage {o.stage})" if o.matched else "zero-filled"
        lines.append(f"  [{o.slot:>2}] {o.name:<28} {target}")
    for slot, cols in report.ambiguity_flags:
        lines.append(f"  ambiguous slot {slot}: {', '.join(cols)}")
    return "\n".join(lines)
