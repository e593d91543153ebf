"""``bridge`` command line: the MCP tool table behind argparse sub-commands.

Exit codes: 0 ok, 1 a verification check failed, 2 configuration or
parameter error, 3 data error, 4 internal error.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from typing import Any

from bridge_bench import __version__
from bridge_bench.server import configure_logging, dispatch
from bridge_bench.state import SessionState
from bridge_bench.trace import get_trace_buffer, init_trace

EXIT_CODES = {
    "check_failed": 1,
    "invalid_config": 2,
    "invalid_params": 2,
    "not_found": 2,
    "unknown_tool": 2,
    "invalid_data": 3,
    "internal": 4,
}

# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _out(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", "--out-dir", dest="out_dir", help="output directory (default: under <state root>/runs/)")


def _seed(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="PRNG seed (default 42)")


def _caps(p: argparse.ArgumentParser) -> None:
    p.add_argument("--train-cap", dest="train_cap", type=int, help="maximum training windows (default 800000)")
    p.add_argument("--test-cap", dest="test_cap", type=int, help="maximum test windows (default 200000)")


def _model(p: argparse.ArgumentParser) -> None:
    p.add_argument("--branches", help="branch subset, e.g. T,H (default T,C,H)")
    p.add_argument("--fusion", choices=["cbgaf", "concat"])
    for flag in ("linear-bias", "conv-bias", "norm-affine"):
        p.add_argument(f"--{flag}", dest=flag.replace("-", "_"), action=argparse.BooleanOptionalAction, default=None)


def _command(sub, name: str, tool: str, help_text: str) -> argparse.ArgumentParser:
    p = sub.add_parser(name, help=help_text, description=help_text)
    p.set_defaults(tool=tool)
    p.add_argument("--json", action="store_true", help="print the full JSON result instead of the text report")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bridge",
        description="BRIDGE feature alignment, LODO harness and TCH-Net kernel.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = _command(sub, "align", "bridge.align", "map dataset headers onto the canonical vocabulary")
    p.add_argument("--vocab", help="vocabulary JSON (default: shipped vocabulary)")
    p.add_argument("--alias", help="per-dataset alias map JSON")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--headers", help="comma-separated header names")
    src.add_argument("--csv", help="CSV whose header row is matched")
    p.add_argument("--ingest", help="per-dataset ingest config JSON (with --csv)")
    p.add_argument("--delimiter")
    p.add_argument("--label-column", dest="label_column")
    p.add_argument("--dataset-id", dest="dataset_id", type=int)
    _out(p)

    p = _command(sub, "preprocess", "bridge.preprocess", "run the full pipeline from a config file")
    p.add_argument("--config", required=True)
    _seed(p)
    _out(p)

    p = _command(sub, "windows", "bridge.windows", "build sliding windows from canonical matrices")
    p.add_argument("--matrices", required=True, help="directory holding matrix_ds<k>.bt files")
    p.add_argument("--config", help="pipeline config supplying window settings and device map")
    p.add_argument("--window", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--device-map", dest="device_map", help="dataset:device pairs, e.g. 0:0,1:1")
    _out(p)

    p = _command(sub, "split", "bridge.split", "split, cap and scale a window set")
    p.add_argument("--windows", required=True, help="window-set stem")
    p.add_argument("--mode", choices=["stratified_random", "temporal", "lodo"])
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.add_argument("--held-out", dest="held_out", type=int)
    _seed(p)
    _caps(p)
    _out(p)

    p = _command(sub, "verify", "bridge.verify", "leakage checks on raw train/test window sets")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--scaler", required=True)
    p.add_argument("--tolerance", type=float)
    _out(p)

    p = _command(sub, "lodo", "bridge.lodo", "write the five leave-one-dataset-out folds")
    p.add_argument("--windows", required=True)
    _seed(p)
    _caps(p)
    _out(p)

    p = _command(sub, "eval", "bridge.eval", "metrics from a scores CSV and/or LODO fold results")
    p.add_argument("--scores")
    p.add_argument("--temporal-scores", dest="temporal_scores")
    p.add_argument("--threshold", type=float)
    p.add_argument("--min-n", dest="min_n", type=int)
    p.add_argument("--fold-f1", dest="fold_f1", help="five comma-separated held-out F1 values")
    p.add_argument("--fold-scores", dest="fold_scores", help="five comma-separated fold scores CSVs")
    p.add_argument("--in-dist-f1", dest="in_dist_f1", type=float)
    p.add_argument("--baseline", dest="baselines", action="append", metavar="NAME=F1,F1,...")
    _out(p)

    p = _command(sub, "compare", "bridge.compare", "one-sided Wilcoxon over per-seed values")
    p.add_argument("--a", required=True, help="comma-separated values of A")
    p.add_argument("--b", required=True, help="comma-separated values of B")
    p.add_argument("--name-a", dest="name_a")
    p.add_argument("--name-b", dest="name_b")
    _out(p)

    p = _command(sub, "params", "bridge.params", "TCH-Net parameter accounting")
    _model(p)
    _out(p)

    p = _command(sub, "gradcheck", "bridge.gradcheck", "finite-difference check of CB-GAF + focal loss")
    _seed(p)
    p.add_argument("--fixtures", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--label-smoothing", dest="label_smoothing", type=float)
    p.add_argument("--zero", action="store_true", default=None)
    p.add_argument("--weights", help="weights file whose CB-GAF and head are checked (default: reduced random fixtures)")
    p.add_argument("--sample", type=int, help="coordinates checked per tensor")
    _out(p)

    p = _command(sub, "init-weights", "bridge.init_weights", "write seeded fixture weights")
    _seed(p)
    _model(p)
    _out(p)

    p = _command(sub, "score", "bridge.score", "TCH-Net inference to a scores CSV")
    p.add_argument("--weights", required=True)
    p.add_argument("--windows", required=True)
    _out(p)

    p = _command(sub, "counts", "bridge.counts", "post-balancing record counts")
    p.add_argument("--config", required=True)
    _seed(p)
    _out(p)

    p = _command(sub, "verify-manifest", "bridge.manifest.verify", "check a run manifest's output digests")
    p.add_argument("path")

    return parser


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _parse_baselines(items: list[str]) -> dict[str, str]:
    baselines: dict[str, str] = {}
    for item in items:
        name, sep, values = item.partition("=")
        if not sep or not name.strip():
            raise ValueError(f"--baseline expects NAME=F1,F1,..., got {item!r}")
        baselines[name.strip()] = values
    return baselines


def arguments_for(ns: argparse.Namespace) -> dict[str, Any]:
    """Tool arguments from parsed flags; unset flags are left to the tool defaults."""
    args = {k: v for k, v in vars(ns).items() if k not in ("tool", "command", "json") and v is not None}
    if "baselines" in args:
        args["baselines"] = _parse_baselines(args["baselines"])
    return args


def exit_code(result: dict[str, Any]) -> int:
    if result.get("ok"):
        return 0
    error = result.get("error") or {}
    return EXIT_CODES.get(error.get("code"), 4)


def run(argv: list[str] | None = None) -> tuple[dict[str, Any], bool]:
    ns = build_parser().parse_args(argv)
    try:
        args = arguments_for(ns)
    except ValueError as exc:
        return {"ok": False, "error": {"code": "invalid_params", "message": str(exc)}}, ns.json
    return asyncio.run(dispatch(SessionState(), ns.tool, args)), ns.json


def main(argv: list[str] | None = None) -> None:
    configure_logging()
    init_trace()
    try:
        result, as_json = run(argv)
    finally:
        buf = get_trace_buffer()
        if buf:
            buf.close()

    if as_json:
        print(json.dumps(result, indent=2, default=str))
    elif result.get("text"):
        print(result["text"])
    if not result.get("ok"):
        error = result.get("error") or {}
        print(f"error [{error.get('code')}]: {error.get('message')}", file=sys.stderr)
    elif result.get("manifest") and not as_json:
        print(f"manifest: {result['manifest']}", file=sys.stderr)
    sys.exit(exit_code(result))


if __name__ == "__main__":
    main()
