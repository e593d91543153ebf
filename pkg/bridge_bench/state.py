"""In-memory session state: the registry of commands run in this process."""

from __future__ import annotations

import logging
import time
import uuid as _uuid
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Any

logger = logging.getLogger(__name__)

MAX_RUNS = 200


@dataclass
class RunEntry:
    """One command invocation and where its results went."""

    run_id: str
    command: str
    args: dict[str, Any]
    ok: bool | None = None
    error_code: str | None = None
    out_dir: str | None = None
    manifest: str | None = None
    started_ts: float = field(default_factory=time.time)
    ended_ts: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "run_id": self.run_id,
            "command": self.command,
            "ok": self.ok,
            "error_code": self.error_code,
            "out_dir": self.out_dir,
            "manifest": self.manifest,
            "started_ts": self.started_ts,
            "ended_ts": self.ended_ts,
        }


class SessionState:
    """Run registry shared by every handler; oldest entries are evicted past *max_runs*."""

    def __init__(self, max_runs: int = MAX_RUNS) -> None:
        self.max_runs = max_runs
        self.runs: OrderedDict[str, RunEntry] = OrderedDict()

    def new_run_id(self) -> str:
        return _uuid.uuid4().hex[:12]

    def start_run(self, command: str, args: dict[str, Any]) -> RunEntry:
        entry = RunEntry(run_id=self.new_run_id(), command=command, args=dict(args))
        self.runs[entry.run_id] = entry
        while len(self.runs) > self.max_runs:
            evicted, _ = self.runs.popitem(last=False)
            logger.debug("Evicted run %s from the registry", evicted)
        return entry

    def finish_run(self, entry: RunEntry, result: dict[str, Any]) -> None:
        entry.ok = bool(result.get("ok"))
        error = result.get("error")
        entry.error_code = error.get("code") if isinstance(error, dict) else None
        entry.out_dir = result.get("out_dir")
        entry.manifest = result.get("manifest")
        entry.ended_ts = time.time()

    def get_run(self, run_id: str) -> RunEntry:
        if run_id not in self.runs:
            raise KeyError(f"Unknown run_id: {run_id}")
        return self.runs[run_id]
