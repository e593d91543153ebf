"""BRIDGE MCP server – stdio transport, one tool per pipeline command."""

from __future__ import annotations

import asyncio
import contextlib
import logging
import os
import sys
import time
from typing import Any

from mcp.server import NotificationOptions, Server
from mcp.server.stdio import stdio_server
from mcp.types import TextContent, Tool

from bridge_bench import (
    handlers_data,
    handlers_eval,
    handlers_introspection,
    handlers_model,
    handlers_trace,
)
from bridge_bench.config import resolve_state_root
from bridge_bench.errors import ConfigError, DataError
from bridge_bench.helpers import _err, _result_text, worker_count
from bridge_bench.state import SessionState
from bridge_bench.trace import get_trace_buffer, init_trace, sanitize_args

logger = logging.getLogger("bridge_bench")

# ---------------------------------------------------------------------------
# Logging
# ---------------------------------------------------------------------------


def configure_logging() -> None:
    """Configure the root handler from ``BRIDGE_LOG_LEVEL`` (default WARNING), on stderr."""
    level = os.environ.get("BRIDGE_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        stream=sys.stderr,
    )


# ---------------------------------------------------------------------------
# Tool table and dispatch
# ---------------------------------------------------------------------------

TOOLS: list[Tool] = (
    handlers_data.TOOLS
    + handlers_eval.TOOLS
    + handlers_model.TOOLS
    + handlers_introspection.TOOLS
    + handlers_trace.TOOLS
)
HANDLERS: dict[str, Any] = {
    **handlers_data.HANDLERS,
    **handlers_eval.HANDLERS,
    **handlers_model.HANDLERS,
    **handlers_introspection.HANDLERS,
    **handlers_trace.HANDLERS,
}

# Tools that only read session or trace state are not recorded as runs.
_UNRECORDED = frozenset(handlers_introspection.HANDLERS) | frozenset(handlers_trace.HANDLERS)


def _error_result(name: str, exc: Exception) -> dict[str, Any]:
    stage = getattr(exc, "stage", None)
    # KeyError's str() adds quotes around the message.
    text = str(exc.args[0]) if isinstance(exc, KeyError) and exc.args else str(exc)
    message = f"[{stage}] {text}" if stage else text
    extra = {"stage": stage} if stage else {}
    if isinstance(exc, FileNotFoundError | KeyError):
        return _err("not_found", message, **extra)
    if isinstance(exc, ConfigError):
        return _err("invalid_config", message, **extra)
    if isinstance(exc, DataError):
        return _err("invalid_data", message, **extra)
    if isinstance(exc, ValueError | TypeError):
        return _err("invalid_params", message, **extra)
    logger.error("Unhandled error in %s: %s", name, exc, exc_info=True)
    return _err("internal", f"Internal error in {name}{f' (stage {stage})' if stage else ''}. Check logs for details.", **extra)


async def dispatch(state: SessionState, name: str, arguments: dict[str, Any] | None) -> dict[str, Any]:
    """Run one tool by name and turn any exception into an error result."""
    arguments = arguments or {}
    handler = HANDLERS.get(name)
    if handler is None:
        return _err("unknown_tool", f"No tool named {name}")

    buf = get_trace_buffer()
    if buf:
        buf.emit({"event": "command_start", "command": name, "args": sanitize_args(arguments)})
    t0 = time.monotonic()
    entry = None if name in _UNRECORDED else state.start_run(name, arguments)

    try:
        result = await handler(state, arguments)
    except Exception as exc:
        result = _error_result(name, exc)

    if entry is not None:
        state.finish_run(entry, result)
        result.setdefault("run_id", entry.run_id)
    if buf:
        error = result.get("error")
        buf.emit(
            {
                "event": "command_end",
                "command": name,
                "ok": result.get("ok"),
                "error_code": error.get("code") if isinstance(error, dict) else None,
                "duration_ms": round((time.monotonic() - t0) * 1000, 1),
            }
        )
    return result


# ---------------------------------------------------------------------------
# Server construction
# ---------------------------------------------------------------------------


def build_server() -> tuple[Server, SessionState]:
    state = SessionState()
    server = Server("bridge-bench")

    @server.list_tools()
    async def _list_tools() -> list[Tool]:
        return TOOLS

    @server.call_tool()
    async def _call_tool(name: str, arguments: dict[str, Any] | None) -> list[TextContent]:
        return _result_text(await dispatch(state, name, arguments))

    init_trace()
    return server, state


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


async def _run() -> None:
    server, _state = build_server()
    logger.info("Starting BRIDGE MCP server (state root=%s, threads=%d)", resolve_state_root(), worker_count())
    try:
        async with stdio_server() as (read_stream, write_stream):
            init_options = server.create_initialization_options(notification_options=NotificationOptions())
            await server.run(read_stream, write_stream, init_options)
    finally:
        buf = get_trace_buffer()
        if buf:
            buf.close()


def main() -> None:
    configure_logging()
    with contextlib.suppress(KeyboardInterrupt):
        asyncio.run(_run())


if __name__ == "__main__":
    main()

