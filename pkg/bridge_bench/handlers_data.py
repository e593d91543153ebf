"""Pipeline tool definitions and handlers — align, preprocess, windows, split, verify, lodo, counts."""

from __future__ import annotations

import asyncio
from pathlib import Path
from typing import Any

from mcp.types import Tool

from bridge_bench.config import load_ingest_config, load_pipeline_config
from bridge_bench.helpers import DEFAULT_SEED, _coerce_int_map, _coerce_opt, _coerce_str_list, _err, _ok, _require
from bridge_bench.ingest import read_header_row, render_counts
from bridge_bench.manifest import RunManifest, resolve_out_dir, write_manifest
from bridge_bench.pipeline import (
    align_headers,
    build_matrices,
    load_matrices,
    run_lodo,
    run_preprocess,
    split_windows,
    window_matrices,
    write_json,
    write_partition,
    write_text,
)
from bridge_bench.protocol import RATIO_TOLERANCE, SplitSpec, verify_leakage
from bridge_bench.state import SessionState
from bridge_bench.tensorio import load_window_set, save_window_set
from bridge_bench.transform import load_scaler
from bridge_bench.vocab import coverage_summary, default_vocabulary_path, load_vocabulary, render_coverage, render_report
from bridge_bench.windows import WindowConfig

# ---------------------------------------------------------------------------
# Tool definitions
# ---------------------------------------------------------------------------

_OUT_DIR = {
    "type": "string",
    "description": "Output directory (default: a fresh directory under <state root>/runs/).",
}
_SEED = {"type": ["integer", "string"], "description": "PRNG seed (default 42)."}
_CAPS = {
    "train_cap": {"type": ["integer", "string"], "description": "Maximum training windows (default 800000)."},
    "test_cap": {"type": ["integer", "string"], "description": "Maximum test windows (default 200000)."},
}

TOOLS: list[Tool] = [
    Tool(
        name="bridge.align",
        description=(
            "Map a dataset's column headers onto the 46-slot canonical vocabulary "
            "(exact, alias, then alias-substring matching) and report coverage. "
            "Give either a header list or a CSV whose first row is read. "
            "An ingest config JSON next to the CSV supplies dataset_id, label_column and delimiter."
        ),
        inputSchema={
            "type": "object",
            "properties": {
                "vocab": {"type": "string", "description": "Vocabulary JSON (default: the shipped vocabulary)."},
                "alias": {"type": "string", "description": "Per-dataset alias map JSON."},
                "headers": {
                    "type": ["array", "string"],
                    "items": {"type": "string"},
                    "description": "Header names, as a list or comma-separated.",
                },
                "csv": {"type": "string", "description": "CSV file whose header row is matched."},
                "ingest": {"type": "string", "description": "Per-dataset ingest config JSON (needs csv)."},
                "delimiter": {"type": "string", "default": ","},
                "label_column": {"type": "string", "description": "Column excluded from matching."},
                "dataset_id": {"type": ["integer", "string"], "default": 0},
                "out_dir": _OUT_DIR,
            },
            "required": [],
        },
    ),
    Tool(
        name="bridge.preprocess",
        description=(
            "Run the full pipeline from a YAML config: parse, balance, align, build canonical "
            "matrices, window, split, fit the scaler on the training side and apply it. "
            "Writes matrices, window sets, scaler, split manifest and a run manifest."
        ),
        inputSchema={
            "type": "object",
            "properties": {
                "config": {"type": "string", "description": "Pipeline config (YAML or JSON)."},
                "seed": {**_SEED, "description": "Override the config seed."},
                "out_dir": _OUT_DIR,
            },
            "required": ["config"],
        },
    ),
    Tool(
        name="bridge.windows",
        description="Build sliding windows (W=32, S=4 by default) from canonical matrices written by bridge.preprocess.",
        inputSchema={
            "type": "object",
            "properties": {
                "matrices": {"type": "string", "description": "Directory holding matrix_ds<k>.bt files."},
                "config": {"type": "string", "description": "Pipeline config supplying window settings and device map."},
                "window": {"type": ["integer", "string"]},
                "stride": {"type": ["integer", "string"]},
                "device_map": {
                    "type": ["object", "string"],
                    "description": "dataset_id -> device category, e.g. '0:0,1:1'.",
                },
                "out_dir": _OUT_DIR,
            },
            "required": ["matrices"],
        },
    ),
    Tool(
        name="bridge.split",
        description=(
            "Split a window set (stratified_random, temporal or lodo), apply caps, fit the scaler "
            "on raw training rows and write raw and scaled partitions."
        ),
        inputSchema={
            "type": "object",
            "properties": {
                "windows": {"type": "string", "description": "Window-set stem (without .bt/.json)."},
                "mode": {"type": "string", "enum": ["stratified_random", "temporal", "lodo"]},
                "train_fraction": {"type": ["number", "string"], "default": 0.8},
                "held_out": {"type": ["integer", "string"], "description": "Held-out dataset for mode=lodo."},
                "seed": _SEED,
                **_CAPS,
                "out_dir": _OUT_DIR,
            },
            "required": ["windows"],
        },
    ),
    Tool(
        name="bridge.verify",
        description=(
            "Run the leakage checks on raw train/test window sets: scaler fitted on train only, "
            "zero identical windows across partitions, benign-ratio agreement. Fails with check_failed."
        ),
        inputSchema={
            "type": "object",
            "properties": {
                "train": {"type": "string", "description": "Raw training window-set stem."},
                "test": {"type": "string", "description": "Raw test window-set stem."},
                "scaler": {"type": "string", "description": "scaler.json fitted on the training side."},
                "tolerance": {"type": ["number", "string"], "default": RATIO_TOLERANCE},
                "out_dir": _OUT_DIR,
            },
            "required": ["train", "test", "scaler"],
        },
    ),
    Tool(
        name="bridge.lodo",
        description="Write the five leave-one-dataset-out folds of a window set, each with its own scaler.",
        inputSchema={
            "type": "object",
            "properties": {
                "windows": {"type": "string", "description": "Window-set stem covering all five datasets."},
                "seed": _SEED,
                **_CAPS,
                "out_dir": _OUT_DIR,
            },
            "required": ["windows"],
        },
    ),
    Tool(
        name="bridge.counts",
        description="Post-balancing record counts per dataset plus a combined row, and vocabulary coverage.",
        inputSchema={
            "type": "object",
            "properties": {
                "config": {"type": "string", "description": "Pipeline config (YAML or JSON)."},
                "seed": _SEED,
                "out_dir": _OUT_DIR,
            },
            "required": ["config"],
        },
    ),
]

# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _window_config(args: dict[str, Any], base: WindowConfig | None = None) -> WindowConfig:
    base = base or WindowConfig()
    return WindowConfig(
        window=_coerce_opt(args, "window", int, base.window),
        stride=_coerce_opt(args, "stride", int, base.stride),
        train_cap=_coerce_opt(args, "train_cap", int, base.train_cap),
        test_cap=_coerce_opt(args, "test_cap", int, base.test_cap),
        device_category_map=_coerce_int_map(args["device_map"]) if args.get("device_map") else dict(base.device_category_map),
    )


def _seed(args: dict[str, Any], default: int = DEFAULT_SEED) -> int:
    return _coerce_opt(args, "seed", int, default)


def _finish(manifest: RunManifest, out_dir: Path, outputs: list[Path], **payload: Any) -> dict[str, Any]:
    path = write_manifest(manifest, out_dir, outputs)
    return _ok(**payload, out_dir=str(out_dir), manifest=str(path), outputs=sorted(manifest.outputs))


def _gate(result: dict[str, Any], failures: list[str]) -> dict[str, Any]:
    """Turn a finished result into ``check_failed`` when a leakage check failed; outputs stay on disk."""
    if not failures:
        return result
    return _err("check_failed", "Leakage verification failed: " + "; ".join(failures), **{k: v for k, v in result.items() if k != "ok"})


# ---------------------------------------------------------------------------
# Handlers
# ---------------------------------------------------------------------------


async def handle_align(_state: SessionState, args: dict[str, Any]) -> dict[str, Any]:
    if not args.get("headers") and not args.get("csv"):
        raise ValueError("Provide either headers or csv")
    if args.get("ingest"):
        if not args.get("csv"):
            raise ValueError("ingest needs csv")
        ingest = load_ingest_config(args["ingest"], args["csv"])
        args = {**args, "dataset_id": ingest.dataset_id, "label_column": ingest.label_column, "delimiter": ingest.delimiter}
    vocab_path = Path(args.get("vocab") or default_vocabulary_path())
    dataset_id = _coerce_opt(args, "dataset_id", int, 0)
    out_dir = resolve_out_dir(args.get("out_dir"), "align")
    manifest = RunManifest("align", config={k: args[k] for k in ("dataset_id", "label_column") if k in args})

    def work():
        vocab = load_vocabulary(vocab_path)
        if args.get("headers"):
            headers = _coerce_str_list(args["headers"])
        else:
            headers = read_header_row(args["csv"], args.get("delimiter") or ",")
            manifest.add_inputs(args["csv"], *([args["ingest"]] if args.get("ingest") else []))
        report = align_headers(vocab, headers, dataset_id, args.get("alias"), args.get("label_column"))
        manifest.add_inputs(vocab_path, *([args["alias"]] if args.get("alias") else []))
        text = render_report(report)
        outputs = [
            write_json(out_dir / f"mapping_ds{dataset_id}.json", report.to_dict()),
            write_text(out_dir / f"mapping_ds{dataset_id}.txt", text),
        ]
        return report, text, outputs

    report, text, outputs = await asyncio.to_thread(work)
    return _finish(
        manifest,
        out_dir,
        outputs,
        report=report.to_dict(),
        coverage_percent=report.coverage_percent,
        text=text,
    )


async def handle_preprocess(_state: SessionState, args: dict[str, Any]) -> dict[str, Any]:
    _require(args, "config")
    cfg = load_pipeline_config(args["config"])
    seed = _seed(args, cfg.seed)
    out_dir = resolve_out_dir(args.get("out_dir"), "preprocess")
    manifest = RunManifest("preprocess", config=cfg.echo(), seeds={"seed": seed})
    manifest.add_inputs(args["config"], cfg.vocabulary, *(d.csv for d in cfg.datasets))
    manifest.add_inputs(*(d.alias_map for d in cfg.datasets if d.alias_map))

    result = await asyncio.to_thread(run_preprocess, cfg, out_dir, seed)
    summary = result.summary(cfg.names)
    text = "\n\n".join(
        [
            render_coverage(coverage_summary(result.build.reports), cfg.names),
            render_counts(result.build.counts),
            f"windows {summary['windows']}; scaler fit_hash {result.partition.scaler.fit_hash}",
        ]
    )
    return _gate(_finish(manifest, out_dir, result.outputs, summary=summary, text=text), result.partition.failures())


async def handle_windows(_state: SessionState, args: dict[str, Any]) -> dict[str, Any]:
    _require(args, "matrices")
    base = None
    if args.get("config"):
        cfg = load_pipeline_config(args["config"])
        base = WindowConfig.from_mapping(cfg.window, cfg.device_map)
    wcfg = _window_config(args, base)
    out_dir = resolve_out_dir(args.get("out_dir"), "windows")
    manifest = RunManifest("windows", config=wcfg.echo())

    def work():
        directory = Path(args["matrices"])
        matrices = load_matrices(directory)
        manifest.add_inputs(*sorted(directory.glob("matrix_ds*.*")))
        ws = window_matrices(matrices, wcfg)
        return ws, save_window_set(ws, out_dir / "windows", {"window": wcfg.echo(), "partition": "all", "scaled": False})

    ws, outputs = await asyncio.to_thread(work)
    return _finish(manifest, out_dir, outputs, counts=ws.label_counts(), text=f"{len(ws)} window(s) {ws.label_counts()}")


async def handle_split(_state: SessionState, args: dict[str, Any]) -> dict[str, Any]:
    _require(args, "windows")
    spec = SplitSpec(
        mode=args.get("mode") or "stratified_random",
        train_fraction=_coerce_opt(args, "train_fraction", float, 0.8),
        seed=_seed(args),
        held_out=_coerce_opt(args, "held_out", int, None),
    )
    wcfg = _window_config(args)
    out_dir = resolve_out_dir(args.get("out_dir"), "split")
    manifest = RunManifest(
        "split", config={**spec.echo(), "train_cap": wcfg.train_cap, "test_cap": wcfg.test_cap}, seeds={"seed": spec.seed}
    )

    def work():
        stem = args["windows"]
        ws, meta = load_window_set(stem)
        manifest.add_inputs(f"{stem}.bt", f"{stem}.json")
        part = split_windows(ws, spec, wcfg)
        return part, write_partition(part, out_dir, {k: v for k, v in meta.items() if k != "partition"})

    part, outputs = await asyncio.to_thread(work)
    fold = part.manifest()
    result = _finish(
        manifest,
        out_dir,
        outputs,
        split=fold,
        text=f"train {fold['partitions']['train']} / test {fold['partitions']['test']}; leakage passed={part.leakage.passed}",
    )
    return _gate(result, part.failures())


async def handle_verify(_state: SessionState, args: dict[str, Any]) -> dict[str, Any]:
    _require(args, "train", "test", "scaler")
    tolerance = _coerce_opt(args, "tolerance", float, RATIO_TOLERANCE)
    out_dir = resolve_out_dir(args.get("out_dir"), "verify")
    manifest = RunManifest("verify", config={"tolerance": tolerance})

    def work():
        train, _ = load_window_set(args["train"])
        test, _ = load_window_set(args["test"])
        scaler = load_scaler(args["scaler"])
        manifest.add_inputs(
            f"{args['train']}.bt", f"{args['train']}.json", f"{args['test']}.bt", f"{args['test']}.json", args["scaler"]
        )
        report = verify_leakage(train, test, scaler, tolerance)
        return report, [write_json(out_dir / "leakage.json", report.to_dict())]

    report, outputs = await asyncio.to_thread(work)
    text = "\n".join(
        [
            f"scaler fitted on train only: {report.scaler_order_ok}",
            f"identical windows across partitions: {report.overlap_count}",
            f"benign fraction train {report.train_benign_fraction:.4f} / test {report.test_benign_fraction:.4f} "
            f"(within {tolerance}: {report.ratio_ok})",
            f"passed: {report.passed}",
        ]
    )
    return _gate(_finish(manifest, out_dir, outputs, leakage=report.to_dict(), text=text), report.failures())


async def handle_lodo(_state: SessionState, args: dict[str, Any]) -> dict[str, Any]:
    _require(args, "windows")
    seed = _seed(args)
    wcfg = _window_config(args)
    out_dir = resolve_out_dir(args.get("out_dir"), "lodo")
    manifest = RunManifest("lodo", config={"train_cap": wcfg.train_cap, "test_cap": wcfg.test_cap}, seeds={"seed": seed})

    def work():
        stem = args["windows"]
        ws, meta = load_window_set(stem)
        manifest.add_inputs(f"{stem}.bt", f"{stem}.json")
        return run_lodo(ws, wcfg, seed, out_dir, {k: v for k, v in meta.items() if k != "partition"})

    parts, outputs = await asyncio.to_thread(work)
    folds = [p.manifest() for p in parts]
    failures = [f"fold {p.spec.held_out}: {'; '.join(p.failures())}" for p in parts if p.failures()]
    lines = [f"fold {f['held_out']}: train {f['partitions']['train']['total']} / test {f['partitions']['test']['total']}" for f in folds]
    return _gate(_finish(manifest, out_dir, outputs, folds=folds, text="\n".join(lines)), failures)


async def handle_counts(_state: SessionState, args: dict[str, Any]) -> dict[str, Any]:
    _require(args, "config")
    cfg = load_pipeline_config(args["config"])
    seed = _seed(args, cfg.seed)
    out_dir = resolve_out_dir(args.get("out_dir"), "counts")
    manifest = RunManifest("counts", config=cfg.echo(), seeds={"seed": seed})
    manifest.add_inputs(args["config"], *(d.csv for d in cfg.datasets))

    def work():
        build = build_matrices(cfg, seed)
        coverage = coverage_summary(build.reports)
        text = render_counts(build.counts) + "\n\n" + render_coverage(coverage, cfg.names)
        payload = {
            "counts": [c.to_dict() for c in build.counts],
            "coverage": [{"dataset_id": r.dataset_id, "matched": r.matched, "coverage_percent": r.coverage_percent} for r in coverage],
        }
        return payload, text, [write_json(out_dir / "counts.json", payload), write_text(out_dir / "counts.txt", text)]

    payload, text, outputs = await asyncio.to_thread(work)
    return _finish(manifest, out_dir, outputs, **payload, text=text)


HANDLERS: dict[str, Any] = {
    "bridge.align": handle_align,
    "bridge.preprocess": handle_preprocess,
    "bridge.windows": handle_windows,
    "bridge.split": handle_split,
    "bridge.verify": handle_verify,
    "bridge.lodo": handle_lodo,
    "bridge.counts": handle_counts,
}
