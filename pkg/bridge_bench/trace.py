"""JSONL tracing for bridge commands and pipeline stages.

In-memory ring buffer with optional file sink. Tracing is on by default;
set ``BRIDGE_TRACE=0`` to disable.
"""

from __future__ import annotations

import collections
import copy
import json
import os
import time
from collections.abc import Iterator
from contextlib import contextmanager
from datetime import UTC, datetime
from pathlib import Path
from typing import Any

# ---------------------------------------------------------------------------
# Configuration (read at import time)
# ---------------------------------------------------------------------------

TRACE_ENABLED = os.environ.get("BRIDGE_TRACE", "1").lower() not in ("0", "false", "no")
TRACE_MAX_ITEMS = int(os.environ.get("BRIDGE_TRACE_MAX_ITEMS", "20"))
TRACE_MAX_CHARS = 512

# ---------------------------------------------------------------------------
# Sanitize args
# ---------------------------------------------------------------------------


def _truncate(value: Any) -> Any:
    if isinstance(value, str) and len(value) > TRACE_MAX_CHARS:
        return value[:TRACE_MAX_CHARS] + "…"
    if isinstance(value, list | tuple) and len(value) > TRACE_MAX_ITEMS:
        return [*value[:TRACE_MAX_ITEMS], f"… (+{len(value) - TRACE_MAX_ITEMS} more)"]
    if isinstance(value, dict):
        return {k: _truncate(v) for k, v in value.items()}
    return value


def sanitize_args(args: dict[str, Any]) -> dict[str, Any]:
    """Return a copy of *args* with long lists and strings truncated."""
    return {k: _truncate(v) for k, v in copy.deepcopy(args).items()}


# ---------------------------------------------------------------------------
# TraceBuffer
# ---------------------------------------------------------------------------


class TraceBuffer:
    """Ring buffer of trace events with optional JSONL file sink."""

    def __init__(self, max_items: int = 2000, file_path: str | None = None) -> None:
        self._deque: collections.deque[dict[str, Any]] = collections.deque(maxlen=max_items)
        self._file_path = file_path
        self._fh = None
        if file_path:
            p = Path(file_path)
            p.parent.mkdir(parents=True, exist_ok=True)
            nofollow = getattr(os, "O_NOFOLLOW", 0)
            if nofollow:
                fd = os.open(file_path, os.O_WRONLY | os.O_APPEND | os.O_CREAT | nofollow, 0o644)
                self._fh = os.fdopen(fd, "a", encoding="utf-8")
            else:
                if p.is_symlink():
                    raise ValueError(f"Trace path is a symlink (refusing to follow): {file_path}")
                self._fh = open(file_path, "a", encoding="utf-8")  # noqa: SIM115

    def emit(self, event: dict[str, Any]) -> None:
        event["ts"] = datetime.now(UTC).isoformat()
        self._deque.append(event)
        if self._fh:
            self._fh.write(json.dumps(event, default=str) + "\n")
            self._fh.flush()

    def tail(self, n: int = 50, event: str | None = None) -> list[dict[str, Any]]:
        items = [e for e in self._deque if event is None or e.get("event") == event]
        return items[-n:] if n > 0 else []

    def status(self) -> dict[str, Any]:
        return {
            "enabled": True,
            "event_count": len(self._deque),
            "file_path": self._file_path,
            "max_items": TRACE_MAX_ITEMS,
        }

    def close(self) -> None:
        if self._fh:
            self._fh.close()
            self._fh = None

    def __del__(self) -> None:
        self.close()


# ---------------------------------------------------------------------------
# Module-level singleton
# ---------------------------------------------------------------------------

_buffer: TraceBuffer | None = None


def get_trace_buffer() -> TraceBuffer | None:
    return _buffer


def init_trace() -> TraceBuffer | None:
    """Called once at startup. Returns buffer if tracing enabled, else None."""
    global _buffer
    if not TRACE_ENABLED:
        return None
    if _buffer is not None:
        return _buffer
    from bridge_bench.config import resolve_state_root

    path = str(resolve_state_root() / "traces" / "trace.jsonl")
    _buffer = TraceBuffer(file_path=path)
    return _buffer


@contextmanager
def stage(name: str, **fields: Any) -> Iterator[None]:
    """Emit ``stage_start``/``stage_end`` around a pipeline stage (no-op when tracing is off)."""
    buf = get_trace_buffer()
    if buf:
        buf.emit({"event": "stage_start", "stage": name, **fields})
    t0 = time.monotonic()
    ok = False
    try:
        yield
        ok = True
    finally:
        if buf:
            buf.emit(
                {
                    "event": "stage_end",
                    "stage": name,
                    "ok": ok,
                    "duration_ms": round((time.monotonic() - t0) * 1000, 1),
                    **fields,
                }
            )
