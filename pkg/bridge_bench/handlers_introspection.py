"""Introspection tool definitions and handlers — list runs, verify manifests."""

from __future__ import annotations

from typing import Any

from mcp.types import Tool

from bridge_bench.helpers import _err, _ok, _require
from bridge_bench.manifest import verify_manifest
from bridge_bench.state import SessionState

# ---------------------------------------------------------------------------
# Tool definitions
# ---------------------------------------------------------------------------

TOOLS: list[Tool] = [
    Tool(
        name="bridge.runs.list",
        description=(
            "List commands run in this session with their status, output directory and manifest. "
            "Optionally filter by command. Useful for recovering output paths after context loss."
        ),
        inputSchema={
            "type": "object",
            "properties": {
                "command": {
                    "type": "string",
                    "description": "Optional: only list runs of this tool, e.g. 'bridge.preprocess'.",
                },
            },
            "required": [],
        },
    ),
    Tool(
        name="bridge.manifest.verify",
        description=(
            "Check that every output named in a run manifest exists and matches its recorded "
            "SHA-256 digest. Fails with check_failed when any does not."
        ),
        inputSchema={
            "type": "object",
            "properties": {
                "path": {"type": "string", "description": "Path to a <command>.manifest.json file."},
            },
            "required": ["path"],
        },
    ),
]

# ---------------------------------------------------------------------------
# Handlers
# ---------------------------------------------------------------------------


async def handle_runs_list(state: SessionState, args: dict[str, Any]) -> dict[str, Any]:
    command: str | None = args.get("command")
    items = [e.to_dict() for e in state.runs.values() if command is None or e.command == command]
    return _ok(runs=items, count=len(items))


async def handle_manifest_verify(_state: SessionState, args: dict[str, Any]) -> dict[str, Any]:
    _require(args, "path")
    errors = verify_manifest(args["path"])
    if errors:
        return _err("check_failed", f"{len(errors)} output(s) failed verification", errors=errors, path=args["path"])
    return _ok(path=args["path"], errors=[], text="all outputs match their digests")


HANDLERS: dict[str, Any] = {
    "bridge.runs.list": handle_runs_list,
    "bridge.manifest.verify": handle_manifest_verify,
}
