"""Evaluation tool definitions and handlers — eval, compare."""

from __future__ import annotations

import asyncio
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from mcp.types import Tool

from bridge_bench.errors import DataError
from bridge_bench.helpers import DEFAULT_THRESHOLD, REPORTING_SEEDS, _coerce_float_list, _coerce_str_list, _ok
from bridge_bench.manifest import RunManifest, resolve_out_dir, write_manifest
from bridge_bench.metrics import (
    LODO_FOLDS,
    MIN_RELIABLE_N,
    curve_series,
    evaluate,
    lodo_baseline_deltas,
    lodo_csv,
    lodo_summary,
    per_dataset_breakdown,
    read_scores,
    render_breakdown,
    render_lodo,
    render_metrics,
    seed_summary,
    significance_marker,
    split_comparison,
    wilcoxon_one_sided,
)
from bridge_bench.pipeline import write_json, write_text
from bridge_bench.state import SessionState

TOOLS: list[Tool] = [
    Tool(
        name="bridge.eval",
        description=(
            "Score predictions with the benchmark metrics. Give a scores CSV "
            "(window_id, score, label, c_ds, c_dev) for F1/precision/recall/FA/MCC/ROC-AUC/PR-AUC "
            "plus a per-dataset breakdown, and/or five LODO fold results (F1 values or fold scores "
            "CSVs) with the in-distribution F1 for the mean and generalisation gap."
        ),
        inputSchema={
            "type": "object",
            "properties": {
                "scores": {"type": "string", "description": "Scores CSV to evaluate."},
                "temporal_scores": {
                    "type": "string",
                    "description": "Scores CSV from a temporal split; reports temporal minus random deltas against 'scores'.",
                },
                "threshold": {"type": ["number", "string"], "default": DEFAULT_THRESHOLD},
                "min_n": {
                    "type": ["integer", "string"],
                    "default": MIN_RELIABLE_N,
                    "description": "Datasets with fewer test windows are flagged instead of scored.",
                },
                "fold_f1": {
                    "type": ["array", "string"],
                    "items": {"type": "number"},
                    "description": "Five held-out F1 values in dataset order 0..4.",
                },
                "fold_scores": {
                    "type": ["array", "string"],
                    "items": {"type": "string"},
                    "description": "Five per-fold scores CSVs; the held-out id is read from c_ds.",
                },
                "in_dist_f1": {"type": ["number", "string"], "description": "In-distribution F1 for the gap."},
                "baselines": {
                    "type": "object",
                    "description": "Baseline name -> list of per-fold F1 values; reported as deltas.",
                },
                "out_dir": {"type": "string"},
            },
            "required": [],
        },
    ),
    Tool(
        name="bridge.compare",
        description=(
            "One-sided Wilcoxon signed-rank test that per-seed values of A exceed those of B, "
            "with mean ± std per side and a significance marker. "
            f"One value per seed, usually seeds {', '.join(map(str, REPORTING_SEEDS))}."
        ),
        inputSchema={
            "type": "object",
            "properties": {
                "a": {"type": ["array", "string"], "items": {"type": "number"}},
                "b": {"type": ["array", "string"], "items": {"type": "number"}},
                "name_a": {"type": "string", "default": "A"},
                "name_b": {"type": "string", "default": "B"},
                "out_dir": {"type": "string"},
            },
            "required": ["a", "b"],
        },
    ),
]


def _fold_results(args: dict[str, Any], threshold: float, manifest: RunManifest) -> list[tuple[int, Any]]:
    if args.get("fold_scores"):
        paths = _coerce_str_list(args["fold_scores"])
        folds = []
        for path in paths:
            preds, _ = read_scores(path)
            manifest.add_inputs(path)
            held = np.unique(preds.contexts[:, 0])
            if len(held) != 1:
                raise DataError(f"{path}: a fold scores file must hold one dataset, found c_ds {held.tolist()}")
            folds.append((int(held[0]), evaluate(preds, threshold)))
        return folds
    values = _coerce_float_list(args["fold_f1"])
    if len(values) != LODO_FOLDS:
        raise ValueError(f"fold_f1 needs {LODO_FOLDS} values, got {len(values)}")
    return list(enumerate(values))


async def handle_eval(_state: SessionState, args: dict[str, Any]) -> dict[str, Any]:
    lodo_mode = bool(args.get("fold_f1") or args.get("fold_scores"))
    if not args.get("scores") and not lodo_mode:
        raise ValueError("Provide scores, fold_f1 or fold_scores")
    if lodo_mode and args.get("in_dist_f1") in (None, ""):
        raise ValueError("LODO summaries need in_dist_f1")
    threshold = float(args.get("threshold") if args.get("threshold") not in (None, "") else DEFAULT_THRESHOLD)
    min_n = int(args.get("min_n") or MIN_RELIABLE_N)
    out_dir = resolve_out_dir(args.get("out_dir"), "eval")
    manifest = RunManifest("eval", config={"threshold": threshold, "min_n": min_n})

    def work():
        payload: dict[str, Any] = {}
        sections: list[str] = []
        outputs: list[Path] = []
        if args.get("scores"):
            preds, _ = read_scores(args["scores"])
            manifest.add_inputs(args["scores"])
            report = evaluate(preds, threshold)
            breakdown = per_dataset_breakdown(preds, threshold, min_n)
            payload["metrics"] = report.to_dict()
            payload["breakdown"] = [row.to_dict() for row in breakdown]
            sections += [render_metrics(report), render_breakdown(breakdown)]
            if args.get("temporal_scores"):
                temporal, _ = read_scores(args["temporal_scores"])
                manifest.add_inputs(args["temporal_scores"])
                payload["temporal_minus_random"] = split_comparison(report, evaluate(temporal, threshold))
                sections.append(
                    "Temporal − random: "
                    + ", ".join(
                        f"{k} {'n/a' if v is None else f'{v:+.4f}'}" for k, v in payload["temporal_minus_random"].items()
                    )
                )
            curves = out_dir / "curves.csv"
            pd.DataFrame(curve_series(preds)).to_csv(curves, index=False, float_format="%.17g", lineterminator="\n")
            outputs += [
                write_json(out_dir / "metrics.json", {k: payload[k] for k in payload if k != "lodo"}),
                curves,
            ]
        if lodo_mode:
            summary = lodo_summary(_fold_results(args, threshold, manifest), float(args["in_dist_f1"]))
            payload["lodo"] = summary.to_dict()
            sections.append(render_lodo(summary))
            if args.get("baselines"):
                baselines = {name: _coerce_float_list(v) for name, v in dict(args["baselines"]).items()}
                deltas = lodo_baseline_deltas(summary.mean_f1, baselines)
                payload["lodo"]["baseline_deltas"] = deltas
                sections.append("\n".join(f"Δ vs {name}: {d:+.4f}" for name, d in deltas.items()))
            outputs += [
                write_json(out_dir / "lodo.json", payload["lodo"]),
                write_text(out_dir / "lodo.csv", lodo_csv(summary)),
            ]
        text = "\n\n".join(sections)
        outputs.append(write_text(out_dir / "eval.txt", text))
        return payload, text, outputs

    payload, text, outputs = await asyncio.to_thread(work)
    path = write_manifest(manifest, out_dir, outputs)
    return _ok(**payload, text=text, out_dir=str(out_dir), manifest=str(path))


async def handle_compare(_state: SessionState, args: dict[str, Any]) -> dict[str, Any]:
    a = _coerce_float_list(args.get("a") or [])
    b = _coerce_float_list(args.get("b") or [])
    name_a = args.get("name_a") or "A"
    name_b = args.get("name_b") or "B"
    out_dir = resolve_out_dir(args.get("out_dir"), "compare")
    manifest = RunManifest("compare", config={"a": a, "b": b, "name_a": name_a, "name_b": name_b})

    result = wilcoxon_one_sided(a, b)
    sa, sb = seed_summary(a), seed_summary(b)
    marker = significance_marker(result.p_value)
    payload = {
        "wilcoxon": result.to_dict(),
        "marker": marker,
        "summaries": {
            name_a: {"mean": sa.mean, "std": sa.std, "n": sa.n},
            name_b: {"mean": sb.mean, "std": sb.std, "n": sb.n},
        },
    }
    text = "\n".join(
        [
            f"{name_a:<16} {sa}",
            f"{name_b:<16} {sb}",
            f"W+ = {result.statistic:g}, p = {result.p_value:.5f} ({'exact' if result.exact else 'normal approx.'}) {marker}".rstrip(),
        ]
    )
    outputs = [write_json(out_dir / "compare.json", payload), write_text(out_dir / "compare.txt", text)]
    path = write_manifest(manifest, out_dir, outputs)
    return _ok(**payload, text=text, out_dir=str(out_dir), manifest=str(path))


HANDLERS: dict[str, Any] = {
    "bridge.eval": handle_eval,
    "bridge.compare": handle_compare,
}
