"""Shared helpers, configuration, and response builders for handler modules."""

from __future__ import annotations

import json
import logging
import os
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import Any, TypeVar

from mcp.types import TextContent

logger = logging.getLogger("bridge_bench")

T = TypeVar("T")
R = TypeVar("R")

# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

DEFAULT_SEED = 42
DEFAULT_THRESHOLD = 0.5
REPORTING_SEEDS = (42, 123, 456, 789, 2024)


def worker_count() -> int:
    """Return the worker cap from ``BRIDGE_THREADS`` (read per call so tests can patch it)."""
    raw = os.environ.get("BRIDGE_THREADS", "").strip()
    if not raw:
        return max(1, os.cpu_count() or 1)
    try:
        return max(1, int(raw))
    except ValueError:
        logger.warning("Ignoring non-integer BRIDGE_THREADS=%r", raw)
        return 1


def ordered_map(fn: Callable[[T], R], items: Sequence[T], workers: int | None = None) -> list[R]:
    """Map *fn* over *items* on a thread pool; results keep input order."""
    n = workers if workers is not None else worker_count()
    if n <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def chunk_bounds(total: int, parts: int) -> list[tuple[int, int]]:
    """Split ``range(total)`` into at most *parts* contiguous ``(start, stop)`` chunks."""
    parts = max(1, min(parts, total)) if total else 1
    step, extra = divmod(total, parts)
    bounds: list[tuple[int, int]] = []
    start = 0
    for i in range(parts):
        stop = start + step + (1 if i < extra else 0)
        bounds.append((start, stop))
        start = stop
    return bounds


# ---------------------------------------------------------------------------
# Argument coercion
# ---------------------------------------------------------------------------


def _coerce_bool(value: Any) -> bool:
    """Coerce a value to bool, handling string representations."""
    if isinstance(value, str):
        return value.lower() not in ("false", "0", "")
    return bool(value)


def _coerce_float_list(value: Any) -> list[float]:
    """Accept ``[0.1, 0.2]`` or ``"0.1,0.2"`` and return floats."""
    if isinstance(value, str):
        return [float(v) for v in value.split(",") if v.strip()]
    if isinstance(value, Iterable):
        return [float(v) for v in value]
    raise TypeError(f"Expected a list of numbers, got {type(value).__name__}")


def _coerce_str_list(value: Any) -> list[str]:
    """Accept ``["a", "b"]`` or ``"a,b"``."""
    if isinstance(value, str):
        return [v.strip() for v in value.split(",") if v.strip()]
    if isinstance(value, Iterable):
        return [str(v) for v in value]
    raise TypeError(f"Expected a list of strings, got {type(value).__name__}")


def _coerce_int_map(value: Any) -> dict[int, int]:
    """Accept ``{"0": 1}`` or ``"0:1,1:3"``."""
    if isinstance(value, str):
        pairs = [item.split(":", 1) for item in value.split(",") if item.strip()]
        if any(len(p) != 2 for p in pairs):
            raise ValueError(f"Expected 'key:value' pairs, got {value!r}")
        return {int(k): int(v) for k, v in pairs}
    if isinstance(value, dict):
        return {int(k): int(v) for k, v in value.items()}
    raise TypeError(f"Expected a mapping, got {type(value).__name__}")


def _coerce_opt(args: dict[str, Any], name: str, kind: Callable[[Any], T], default: T) -> T:
    """``kind(args[name])``, or *default* only when the argument is absent or blank (``0`` is a value)."""
    value = args.get(name)
    if value is None or (isinstance(value, str) and not value.strip()):
        return default
    return kind(value)


def _require(args: dict[str, Any], *names: str) -> None:
    missing = [n for n in names if args.get(n) in (None, "")]
    if missing:
        raise ValueError(f"Missing required argument(s): {', '.join(missing)}")


# ---------------------------------------------------------------------------
# Response builders
# ---------------------------------------------------------------------------


def _ok(**kwargs: Any) -> dict[str, Any]:
    return {"ok": True, **kwargs}


def _err(code: str, message: str, **kwargs: Any) -> dict[str, Any]:
    return {"ok": False, "error": {"code": code, "message": message}, **kwargs}


def _result_text(payload: Any) -> list[TextContent]:
    return [TextContent(type="text", text=json.dumps(payload, default=str))]
