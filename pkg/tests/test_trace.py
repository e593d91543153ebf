"""Tests for bridge_bench.trace."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

import bridge_bench.trace as trace_mod
from bridge_bench.trace import TRACE_MAX_CHARS, TRACE_MAX_ITEMS, TraceBuffer, sanitize_args, stage

# ---------------------------------------------------------------------------
# TraceBuffer basics
# ---------------------------------------------------------------------------


class TestTraceBuffer:
    def test_emit_and_tail(self):
        buf = TraceBuffer()
        buf.emit({"event": "command_start", "data": 1})
        buf.emit({"event": "command_end", "data": 2})
        events = buf.tail()
        assert [e["data"] for e in events] == [1, 2]
        assert all("ts" in e for e in events)

    def test_tail_limit(self):
        buf = TraceBuffer()
        for i in range(10):
            buf.emit({"event": "stage_end", "data": i})
        assert [e["data"] for e in buf.tail(3)] == [7, 8, 9]
        assert buf.tail(0) == []

    def test_tail_filters_by_event(self):
        buf = TraceBuffer()
        for i in range(4):
            buf.emit({"event": "stage_start" if i % 2 else "stage_end", "data": i})
        assert [e["data"] for e in buf.tail(10, "stage_start")] == [1, 3]

    def test_status(self):
        buf = TraceBuffer()
        buf.emit({"event": "command_start"})
        status = buf.status()
        assert status["enabled"] is True
        assert status["event_count"] == 1
        assert status["file_path"] is None

    def test_ring_buffer_eviction(self):
        buf = TraceBuffer(max_items=5)
        for i in range(10):
            buf.emit({"event": "stage_end", "data": i})
        assert [e["data"] for e in buf.tail(10)] == [5, 6, 7, 8, 9]

    def test_rejects_symlink_path(self, tmp_path: Path):
        real_file = tmp_path / "real.jsonl"
        real_file.touch()
        link = tmp_path / "link.jsonl"
        link.symlink_to(real_file)
        with pytest.raises((OSError, ValueError)):
            TraceBuffer(file_path=str(link))

    def test_file_sink(self, tmp_path: Path):
        trace_file = tmp_path / "traces" / "trace.jsonl"
        buf = TraceBuffer(file_path=str(trace_file))
        buf.emit({"event": "command_start", "command": "bridge.eval"})
        buf.emit({"event": "command_end", "command": "bridge.eval"})
        buf.close()

        lines = [json.loads(line) for line in trace_file.read_text().splitlines()]
        assert [e["event"] for e in lines] == ["command_start", "command_end"]
        assert all("ts" in e for e in lines)


# ---------------------------------------------------------------------------
# sanitize_args
# ---------------------------------------------------------------------------


class TestSanitizeArgs:
    def test_long_list_truncated(self):
        out = sanitize_args({"fold_f1": list(range(TRACE_MAX_ITEMS + 5))})
        assert len(out["fold_f1"]) == TRACE_MAX_ITEMS + 1
        assert out["fold_f1"][-1] == "… (+5 more)"

    def test_long_string_truncated(self):
        out = sanitize_args({"headers": "x" * (TRACE_MAX_CHARS + 10)})
        assert len(out["headers"]) == TRACE_MAX_CHARS + 1

    def test_nested_and_original_untouched(self):
        args = {"baselines": {"xgb": list(range(50))}, "seed": 42}
        out = sanitize_args(args)
        assert len(out["baselines"]["xgb"]) == TRACE_MAX_ITEMS + 1
        assert len(args["baselines"]["xgb"]) == 50
        assert out["seed"] == 42


# ---------------------------------------------------------------------------
# stage()
# ---------------------------------------------------------------------------


class TestStage:
    def test_emits_start_and_end(self, monkeypatch: pytest.MonkeyPatch):
        buf = TraceBuffer()
        monkeypatch.setattr(trace_mod, "_buffer", buf)
        with stage("windows", dataset_id=2):
            pass
        start, end = buf.tail(2)
        assert start["event"] == "stage_start" and start["dataset_id"] == 2
        assert end["event"] == "stage_end" and end["ok"] is True
        assert end["duration_ms"] >= 0

    def test_failure_marked(self, monkeypatch: pytest.MonkeyPatch):
        buf = TraceBuffer()
        monkeypatch.setattr(trace_mod, "_buffer", buf)
        with pytest.raises(RuntimeError), stage("scale"):
            raise RuntimeError("boom")
        assert buf.tail(1, "stage_end")[0]["ok"] is False

    def test_noop_without_buffer(self, monkeypatch: pytest.MonkeyPatch):
        monkeypatch.setattr(trace_mod, "_buffer", None)
        with stage("split"):
            value = 1
        assert value == 1
