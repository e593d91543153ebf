"""TCH-Net tool definitions and handlers — params, gradcheck, init_weights, score."""

from __future__ import annotations

import asyncio
from typing import Any

from mcp.types import Tool

from bridge_bench.helpers import DEFAULT_SEED, _coerce_bool, _coerce_opt, _coerce_str_list, _err, _ok, _require
from bridge_bench.manifest import RunManifest, resolve_out_dir, write_manifest
from bridge_bench.pipeline import write_json, write_text
from bridge_bench.state import SessionState
from bridge_bench.tchnet.config import BRANCHES, Conventions, LossConfig, ModelConfig
from bridge_bench.tchnet.gradcheck import DEFAULT_SAMPLE, TOLERANCE, gradcheck_cbgaf_focal
from bridge_bench.tchnet.model import TCHNetKernel, gate_statistics, score_windows
from bridge_bench.tchnet.params import count_parameters, render_parameters
from bridge_bench.tchnet.weights import init_weights, load_weights, save_weights
from bridge_bench.tensorio import load_window_set

_MODEL_PROPS: dict[str, Any] = {
    "branches": {
        "type": ["array", "string"],
        "items": {"type": "string", "enum": list(BRANCHES)},
        "description": "Branch subset, e.g. 'T,H' (default T,C,H).",
    },
    "fusion": {"type": "string", "enum": ["cbgaf", "concat"], "default": "cbgaf"},
    "linear_bias": {"type": ["boolean", "string"], "default": True},
    "conv_bias": {"type": ["boolean", "string"], "default": False},
    "norm_affine": {"type": ["boolean", "string"], "default": True},
}

TOOLS: list[Tool] = [
    Tool(
        name="bridge.params",
        description=(
            "Count TCH-Net trainable parameters per component under the given layer conventions "
            "and compare the total with the 2,691,696 reference."
        ),
        inputSchema={"type": "object", "properties": {**_MODEL_PROPS, "out_dir": {"type": "string"}}, "required": []},
    ),
    Tool(
        name="bridge.gradcheck",
        description=(
            "Verify CB-GAF + focal-loss gradients against central finite differences in double "
            "precision over a number of seeded fixtures: reduced random ones by default, or float64 "
            "copies of a weights file's fusion and head. Fails with check_failed above 1e-4."
        ),
        inputSchema={
            "type": "object",
            "properties": {
                "seed": {"type": ["integer", "string"], "default": DEFAULT_SEED},
                "fixtures": {"type": ["integer", "string"], "default": 10},
                "gamma": {"type": ["number", "string"], "default": 2.0},
                "label_smoothing": {"type": ["number", "string"], "default": 0.05},
                "zero": {"type": ["boolean", "string"], "default": False, "description": "All-zero parameters."},
                "weights": {"type": "string", "description": "BRIDGE-WEIGHTS v1 file whose CB-GAF and head are checked."},
                "sample": {
                    "type": ["integer", "string"],
                    "description": f"Coordinates checked per tensor (default: all, or {DEFAULT_SAMPLE} with weights).",
                },
                "out_dir": {"type": "string"},
            },
            "required": [],
        },
    ),
    Tool(
        name="bridge.init_weights",
        description="Write a seeded uniform(-0.05, 0.05) BRIDGE-WEIGHTS v1 file for the given model configuration.",
        inputSchema={
            "type": "object",
            "properties": {
                "seed": {"type": ["integer", "string"], "default": DEFAULT_SEED},
                **_MODEL_PROPS,
                "out_dir": {"type": "string"},
            },
            "required": [],
        },
    ),
    Tool(
        name="bridge.score",
        description=(
            "Run TCH-Net inference on a window set and write a scores CSV for bridge.eval, "
            "plus mean gate values per branch grouped by dataset."
        ),
        inputSchema={
            "type": "object",
            "properties": {
                "weights": {"type": "string", "description": "BRIDGE-WEIGHTS v1 file."},
                "windows": {"type": "string", "description": "Scaled window-set stem."},
                "out_dir": {"type": "string"},
            },
            "required": ["weights", "windows"],
        },
    ),
]


def _conventions(args: dict[str, Any]) -> Conventions:
    defaults = Conventions()
    return Conventions(
        **{
            name: _coerce_opt(args, name, _coerce_bool, getattr(defaults, name))
            for name in ("linear_bias", "conv_bias", "norm_affine")
        }
    )


def _model_config(args: dict[str, Any]) -> ModelConfig:
    branches = tuple(b.upper() for b in _coerce_str_list(args["branches"])) if args.get("branches") else BRANCHES
    return ModelConfig(branches=branches, fusion=args.get("fusion") or "cbgaf")


async def handle_params(_state: SessionState, args: dict[str, Any]) -> dict[str, Any]:
    cfg, conventions = _model_config(args), _conventions(args)
    out_dir = resolve_out_dir(args.get("out_dir"), "params")
    manifest = RunManifest("params", config={"model": cfg.to_dict(), "conventions": conventions.to_dict()})
    count = await asyncio.to_thread(count_parameters, cfg, conventions)
    text = render_parameters(count)
    outputs = [write_json(out_dir / "params.json", count.to_dict()), write_text(out_dir / "params.txt", text)]
    path = write_manifest(manifest, out_dir, outputs)
    return _ok(params=count.to_dict(), text=text, out_dir=str(out_dir), manifest=str(path))


async def handle_gradcheck(_state: SessionState, args: dict[str, Any]) -> dict[str, Any]:
    seed = _coerce_opt(args, "seed", int, DEFAULT_SEED)
    fixtures = _coerce_opt(args, "fixtures", int, 10)
    sample = _coerce_opt(args, "sample", int, None)
    if fixtures < 1:
        raise ValueError("fixtures must be ≥ 1")
    defaults = LossConfig()
    loss_cfg = LossConfig(
        gamma=_coerce_opt(args, "gamma", float, defaults.gamma),
        label_smoothing=_coerce_opt(args, "label_smoothing", float, defaults.label_smoothing),
    )
    zero = _coerce_bool(args.get("zero", False))
    out_dir = resolve_out_dir(args.get("out_dir"), "gradcheck")
    manifest = RunManifest(
        "gradcheck",
        config={
            "fixtures": fixtures,
            "gamma": loss_cfg.gamma,
            "label_smoothing": loss_cfg.label_smoothing,
            "zero": zero,
            "sample": sample,
        },
        seeds={"seed": seed},
    )
    store = None
    if args.get("weights"):
        store = await asyncio.to_thread(load_weights, args["weights"])
        manifest.add_inputs(args["weights"])

    def work():
        return [
            gradcheck_cbgaf_focal(seed + i, loss_cfg=loss_cfg, zero=zero, store=store, sample=sample)
            for i in range(fixtures)
        ]

    results = await asyncio.to_thread(work)
    worst = max(r.max_error for r in results)
    passed = all(r.passed() for r in results)
    text = "\n".join(
        [f"seed {r.seed}: max rel. error {r.max_error:.3e} over {r.coordinates} coordinate(s)" for r in results]
        + [f"worst {worst:.3e} (tolerance {TOLERANCE:g}): {'PASS' if passed else 'FAIL'}"]
    )
    payload = {"fixtures": [r.to_dict() for r in results], "max_error": worst, "passed": passed}
    outputs = [write_json(out_dir / "gradcheck.json", payload), write_text(out_dir / "gradcheck.txt", text)]
    path = write_manifest(manifest, out_dir, outputs)
    result = {**payload, "text": text, "out_dir": str(out_dir), "manifest": str(path)}
    if not passed:
        return _err("check_failed", f"Gradient check exceeded tolerance {TOLERANCE:g}: worst {worst:.3e}", **result)
    return _ok(**result)


async def handle_init_weights(_state: SessionState, args: dict[str, Any]) -> dict[str, Any]:
    seed = _coerce_opt(args, "seed", int, DEFAULT_SEED)
    cfg, conventions = _model_config(args), _conventions(args)
    out_dir = resolve_out_dir(args.get("out_dir"), "init-weights")
    manifest = RunManifest(
        "init-weights", config={"model": cfg.to_dict(), "conventions": conventions.to_dict()}, seeds={"seed": seed}
    )

    def work():
        store = init_weights(cfg, conventions, seed)
        return store, save_weights(store, out_dir / "weights.bw")

    store, weights_path = await asyncio.to_thread(work)
    path = write_manifest(manifest, out_dir, [weights_path])
    return _ok(
        weights=str(weights_path),
        tensors=len(store),
        text=f"{len(store)} tensor(s) written to {weights_path}",
        out_dir=str(out_dir),
        manifest=str(path),
    )


async def handle_score(_state: SessionState, args: dict[str, Any]) -> dict[str, Any]:
    _require(args, "weights", "windows")
    out_dir = resolve_out_dir(args.get("out_dir"), "score")
    manifest = RunManifest("score")

    def work():
        kernel = TCHNetKernel.from_file(args["weights"])
        ws, _ = load_window_set(args["windows"])
        manifest.add_inputs(args["weights"], f"{args['windows']}.bt", f"{args['windows']}.json")
        manifest.config = {"model": kernel.config.to_dict()}
        scores_path, diag = score_windows(kernel, ws, out_dir / "scores.csv")
        gates = gate_statistics(diag, ws.contexts)
        return len(ws), gates, [scores_path, write_json(out_dir / "gates.json", gates)]

    n, gates, outputs = await asyncio.to_thread(work)
    path = write_manifest(manifest, out_dir, outputs)
    return _ok(
        windows=n,
        scores=str(outputs[0]),
        gates=gates,
        text=f"scored {n} window(s) -> {outputs[0]}",
        out_dir=str(out_dir),
        manifest=str(path),
    )


HANDLERS: dict[str, Any] = {
    "bridge.params": handle_params,
    "bridge.gradcheck": handle_gradcheck,
    "bridge.init_weights": handle_init_weights,
    "bridge.score": handle_score,
}
