"""Stage orchestration shared by the CLI and the MCP tools.

Every stage runs inside :func:`_stage`, which traces it and tags any
exception with the stage name so failures report where they happened.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from bridge_bench.config import DatasetConfig, PipelineConfig
from bridge_bench.errors import ConfigError
from bridge_bench.helpers import ordered_map
from bridge_bench.ingest import (
    CanonicalMatrix,
    RecordCount,
    balance_classes,
    build_canonical_matrix,
    concat_matrices,
    parse_csv,
    record_counts,
)
from bridge_bench.protocol import LeakageReport, SplitSpec, fold_manifest, lodo_folds, split, verify_leakage
from bridge_bench.tensorio import load_matrix, save_matrix, save_window_set
from bridge_bench.trace import stage
from bridge_bench.transform import ScalerParams, apply_scaler, fit_scaler, save_scaler
from bridge_bench.vocab import (
    AliasMap,
    CanonicalVocabulary,
    MappingReport,
    coverage_summary,
    load_alias_map,
    load_vocabulary,
    match_columns,
)
from bridge_bench.windows import WindowConfig, WindowSet, build_windows, cap_windows, concat_windows

logger = logging.getLogger(__name__)


@contextmanager
def _stage(name: str, **fields: Any) -> Iterator[None]:
    with stage(name, **fields):
        try:
            yield
        except Exception as exc:
            if getattr(exc, "stage", None) is None:
                try:
                    exc.stage = name  # type: ignore[attr-defined]
                except AttributeError:
                    pass
            raise


def write_json(path: Path, payload: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path


def write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text.rstrip("\n") + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# Alignment and matrices
# ---------------------------------------------------------------------------


def alias_map_for(dataset_id: int, path: str | Path | None) -> AliasMap:
    if not path:
        return AliasMap(dataset_id=dataset_id)
    alias_map = load_alias_map(path)
    if alias_map.dataset_id != dataset_id:
        raise ConfigError(f"alias map {path} is for dataset {alias_map.dataset_id}, not {dataset_id}")
    return alias_map


def align_headers(
    vocab: CanonicalVocabulary,
    headers: list[str],
    dataset_id: int,
    alias_path: str | Path | None = None,
    label_column: str | None = None,
) -> MappingReport:
    """Match *headers* (minus the label column, if named) against *vocab*."""
    label = label_column.strip() if label_column else None
    eligible = [h for h in headers if h != label]
    return match_columns(vocab, alias_map_for(dataset_id, alias_path), eligible)


@dataclass
class MatrixBuild:
    vocab: CanonicalVocabulary
    reports: list[MappingReport]
    matrices: list[CanonicalMatrix]
    counts: list[RecordCount]


def build_matrices(cfg: PipelineConfig, seed: int) -> MatrixBuild:
    """parse → balance → align → vectors → concat, in that order."""
    with _stage("vocabulary"):
        vocab = load_vocabulary(cfg.vocabulary)

    def _parse(d: DatasetConfig):
        return parse_csv(d.csv, d.label_column, d.benign_values, dataset_id=d.dataset_id, delimiter=d.delimiter)

    with _stage("parse", datasets=len(cfg.datasets)):
        tables = ordered_map(_parse, list(cfg.datasets))
    with _stage("balance", seed=seed):
        tables = [balance_classes(t, seed) for t in tables]
    with _stage("align"):
        reports = [
            match_columns(vocab, alias_map_for(d.dataset_id, d.alias_map), t.feature_headers)
            for d, t in zip(cfg.datasets, tables, strict=True)
        ]
    with _stage("vectors"):
        matrices = [build_canonical_matrix(t, r) for t, r in zip(tables, reports, strict=True)]
    with _stage("concat"):
        stacked = concat_matrices(matrices)
        counts = record_counts(matrices, cfg.names)
    logger.info("Built %d canonical rows (%d sanitised cells)", len(stacked.labels), stacked.sanitation_count)
    return MatrixBuild(vocab, reports, matrices, counts)


# ---------------------------------------------------------------------------
# Windows, splits and scaling
# ---------------------------------------------------------------------------


def window_matrices(matrices: list[CanonicalMatrix], wcfg: WindowConfig) -> WindowSet:
    with _stage("windows", window=wcfg.window, stride=wcfg.stride):
        return concat_windows([build_windows(m, wcfg) for m in matrices])


@dataclass
class Partition:
    """Raw and scaled train/test windows for one split, plus its scaler and leakage report."""

    spec: SplitSpec
    train_raw: WindowSet
    test_raw: WindowSet
    scaler: ScalerParams
    train: WindowSet
    test: WindowSet
    leakage: LeakageReport

    def manifest(self) -> dict[str, Any]:
        return fold_manifest(self.spec, self.train_raw, self.test_raw, self.leakage, self.scaler)

    def failures(self) -> list[str]:
        """Failed leakage checks; the benign-ratio check gates stratified splits only."""
        return self.leakage.failures(check_ratio=self.spec.mode == "stratified_random")


def scale_partition(spec: SplitSpec, train_raw: WindowSet, test_raw: WindowSet) -> Partition:
    """Fit the scaler on raw training rows only, apply it to both sides and run the leakage checks."""
    with _stage("scale"):
        scaler = fit_scaler(train_raw.features.reshape(-1, train_raw.features.shape[-1]))
        train = train_raw.with_features(apply_scaler(scaler, train_raw.features))
        test = test_raw.with_features(apply_scaler(scaler, test_raw.features)) if len(test_raw) else test_raw
    with _stage("verify"):
        leakage = verify_leakage(train_raw, test_raw, scaler)
    return Partition(spec, train_raw, test_raw, scaler, train, test, leakage)


def split_windows(ws: WindowSet, spec: SplitSpec, wcfg: WindowConfig) -> Partition:
    with _stage("split", mode=spec.mode):
        train_raw, test_raw = split(ws, spec)
        train_raw = cap_windows(train_raw, wcfg.train_cap, spec.seed)
        test_raw = cap_windows(test_raw, wcfg.test_cap, spec.seed)
    return scale_partition(spec, train_raw, test_raw)


def write_partition(part: Partition, out_dir: Path, meta: dict[str, Any]) -> list[Path]:
    """``train_raw``/``test_raw`` (unscaled), ``train``/``test`` (scaled), ``scaler.json``, ``split.json``."""
    with _stage("write", out_dir=str(out_dir)):
        outputs: list[Path] = []
        split_meta = {**meta, "split": part.spec.echo()}
        outputs += save_window_set(part.train_raw, out_dir / "train_raw", {**split_meta, "partition": "train", "scaled": False})
        outputs += save_window_set(part.test_raw, out_dir / "test_raw", {**split_meta, "partition": "test", "scaled": False})
        outputs += save_window_set(part.train, out_dir / "train", {**split_meta, "partition": "train", "scaled": True})
        outputs += save_window_set(part.test, out_dir / "test", {**split_meta, "partition": "test", "scaled": True})
        outputs.append(save_scaler(part.scaler, out_dir / "scaler.json"))
        outputs.append(write_json(out_dir / "split.json", part.manifest()))
        return outputs


def run_lodo(ws: WindowSet, wcfg: WindowConfig, seed: int, out_dir: Path, meta: dict[str, Any]) -> tuple[list[Partition], list[Path]]:
    """Five held-out folds, each scaled on its own training side, written to ``fold_<k>/``."""
    with _stage("lodo_folds"):
        folds = lodo_folds(ws)
    parts: list[Partition] = []
    outputs: list[Path] = []
    for fold in folds:
        spec = SplitSpec(mode="lodo", held_out=fold.held_out, seed=seed)
        with _stage("fold", held_out=fold.held_out):
            train_raw = cap_windows(fold.train, wcfg.train_cap, seed)
            test_raw = cap_windows(fold.test, wcfg.test_cap, seed)
        part = scale_partition(spec, train_raw, test_raw)
        outputs += write_partition(part, out_dir / f"fold_{fold.held_out}", meta)
        parts.append(part)
    return parts, outputs


# ---------------------------------------------------------------------------
# Full preprocessing run
# ---------------------------------------------------------------------------


@dataclass
class PreprocessResult:
    build: MatrixBuild
    windows: WindowSet
    partition: Partition
    outputs: list[Path] = field(default_factory=list)

    def summary(self, names: dict[int, str]) -> dict[str, Any]:
        return {
            "coverage": [
                {"dataset_id": r.dataset_id, "name": names.get(r.dataset_id), "matched": r.matched, "coverage_percent": r.coverage_percent}
                for r in coverage_summary(self.build.reports)
            ],
            "counts": [c.to_dict() for c in self.build.counts],
            "sanitation_count": sum(m.sanitation_count for m in self.build.matrices),
            "windows": self.windows.label_counts(),
            "split": self.partition.manifest(),
        }


def run_preprocess(cfg: PipelineConfig, out_dir: Path, seed: int | None = None) -> PreprocessResult:
    """Balance → vectors → concat → windows → split → fit scaler on train → apply, then write everything."""
    seed = cfg.seed if seed is None else seed
    wcfg = WindowConfig.from_mapping(cfg.window, cfg.device_map)
    spec = SplitSpec(
        mode=str(cfg.split.get("mode", "stratified_random")),
        train_fraction=float(cfg.split.get("train_fraction", 0.8)),
        seed=seed,
    )
    build = build_matrices(cfg, seed)
    ws = window_matrices(build.matrices, wcfg)
    part = split_windows(ws, spec, wcfg)

    meta = {"seed": seed, "window": wcfg.echo()}
    outputs: list[Path] = []
    with _stage("write", out_dir=str(out_dir)):
        for report, matrix in zip(build.reports, build.matrices, strict=True):
            outputs.append(write_json(out_dir / f"mapping_ds{report.dataset_id}.json", report.to_dict()))
            outputs += save_matrix(
                matrix,
                out_dir / f"matrix_ds{matrix.dataset_id}",
                {"seed": seed, "matched": report.matched_count, "coverage_percent": report.coverage_percent},
            )
        outputs += save_window_set(ws, out_dir / "windows", {**meta, "partition": "all", "scaled": False})
    outputs += write_partition(part, out_dir, meta)
    result = PreprocessResult(build, ws, part, outputs)
    outputs.append(write_json(out_dir / "summary.json", result.summary(cfg.names)))
    return result


def load_matrices(directory: Path) -> list[CanonicalMatrix]:
    """Every ``matrix_ds<k>`` pair in *directory*, ordered by dataset id."""
    stems = sorted(p.with_suffix("") for p in directory.glob("matrix_ds*.bt"))
    if not stems:
        raise FileNotFoundError(f"No matrix_ds*.bt files in {directory}")
    return sorted((load_matrix(s) for s in stems), key=lambda m: m.dataset_id)
