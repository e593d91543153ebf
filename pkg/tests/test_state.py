"""Unit tests for bridge_bench.state."""

from __future__ import annotations

import pytest

from bridge_bench.state import SessionState

# ---------------------------------------------------------------------------
# Run registry
# ---------------------------------------------------------------------------


class TestRunRegistry:
    def test_start_and_finish(self):
        state = SessionState()
        entry = state.start_run("bridge.eval", {"scores": "s.csv"})
        assert entry.ok is None
        assert len(entry.run_id) == 12
        state.finish_run(entry, {"ok": True, "out_dir": "/tmp/x", "manifest": "/tmp/x/eval.manifest.json"})
        got = state.get_run(entry.run_id)
        assert got.ok is True
        assert got.error_code is None
        assert got.to_dict()["manifest"] == "/tmp/x/eval.manifest.json"

    def test_args_copied(self):
        state = SessionState()
        args = {"a": 1}
        entry = state.start_run("bridge.compare", args)
        args["a"] = 2
        assert entry.args == {"a": 1}

    def test_failure_recorded(self):
        state = SessionState()
        entry = state.start_run("bridge.verify", {})
        state.finish_run(entry, {"ok": False, "error": {"code": "check_failed", "message": "x"}})
        assert entry.ok is False
        assert entry.error_code == "check_failed"
        assert entry.ended_ts >= entry.started_ts

    def test_unknown_run(self):
        with pytest.raises(KeyError, match="Unknown run_id"):
            SessionState().get_run("nope")

    def test_eviction_keeps_newest(self):
        state = SessionState(max_runs=3)
        ids = [state.start_run("bridge.params", {}).run_id for _ in range(5)]
        assert list(state.runs) == ids[2:]
