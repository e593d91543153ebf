"""Tests for the ``bridge`` command line."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

import bridge_bench.trace as trace_mod
from bridge_bench.cli import arguments_for, build_parser, exit_code, main, run
from bridge_bench.tensorio import save_window_set
from tests.conftest import make_window_set, write_constant_pipeline


@pytest.fixture(autouse=True)
def _fresh_trace(monkeypatch: pytest.MonkeyPatch):
    """``main`` initialises the trace singleton; restore it afterwards."""
    monkeypatch.setattr(trace_mod, "_buffer", None)


def _main(argv: list[str]) -> int:
    with pytest.raises(SystemExit) as info:
        main(argv)
    return info.value.code


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


class TestArguments:
    def test_unset_flags_are_dropped(self):
        ns = build_parser().parse_args(["compare", "--a", "1,2", "--b", "0,0"])
        assert ns.tool == "bridge.compare"
        assert arguments_for(ns) == {"a": "1,2", "b": "0,0"}

    def test_baselines(self):
        ns = build_parser().parse_args(
            ["eval", "--fold-f1", "1,2,3,4,5", "--in-dist-f1", "0.9", "--baseline", "xgb=0.1,0.2", "--baseline", "rf=0.3"]
        )
        args = arguments_for(ns)
        assert args["baselines"] == {"xgb": "0.1,0.2", "rf": "0.3"}
        assert args["in_dist_f1"] == 0.9

    def test_bad_baseline(self):
        result, _ = run(["eval", "--fold-f1", "1,2,3,4,5", "--in-dist-f1", "0.9", "--baseline", "noequals"])
        assert result["error"]["code"] == "invalid_params"

    def test_boolean_conventions(self):
        ns = build_parser().parse_args(["params", "--conv-bias", "--no-linear-bias"])
        args = arguments_for(ns)
        assert args["conv_bias"] is True
        assert args["linear_bias"] is False
        assert "norm_affine" not in args

    def test_align_needs_one_source(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["align"])

    def test_verify_manifest_positional(self):
        ns = build_parser().parse_args(["verify-manifest", "x.json"])
        assert ns.tool == "bridge.manifest.verify"
        assert arguments_for(ns) == {"path": "x.json"}


class TestExitCode:
    @pytest.mark.parametrize(
        ("code", "expected"),
        [
            ("check_failed", 1),
            ("invalid_config", 2),
            ("invalid_params", 2),
            ("not_found", 2),
            ("unknown_tool", 2),
            ("invalid_data", 3),
            ("internal", 4),
            ("something_else", 4),
        ],
    )
    def test_mapping(self, code, expected):
        assert exit_code({"ok": False, "error": {"code": code, "message": ""}}) == expected

    def test_ok(self):
        assert exit_code({"ok": True}) == 0


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


class TestCommands:
    def test_params_text(self, tmp_path: Path, capsys):
        assert _main(["params", "--out", str(tmp_path)]) == 0
        captured = capsys.readouterr()
        assert "2,691,696" in captured.out
        assert "params.manifest.json" in captured.err

    def test_eval_fold_f1_json(self, tmp_path: Path, capsys):
        code = _main(
            ["eval", "--fold-f1", "0.3128,0.6013,0.5934,0.6791,0.6021", "--in-dist-f1", "0.8296", "--out", str(tmp_path), "--json"]
        )
        assert code == 0
        data = json.loads(capsys.readouterr().out)
        assert round(data["lodo"]["mean_f1"], 4) == 0.5577
        assert round(data["lodo"]["gap"], 4) == 0.2719

    def test_compare(self, tmp_path: Path, capsys):
        code = _main(["compare", "--a", "0.9,0.91,0.92,0.93,0.94", "--b", "0.8,0.8,0.8,0.8,0.8", "--out", str(tmp_path)])
        assert code == 0
        assert "p = 0.03125 (exact) *" in capsys.readouterr().out

    def test_missing_vocabulary_exits_2(self, tmp_path: Path, capsys):
        code = _main(["align", "--headers", "dur", "--vocab", str(tmp_path / "none.json")])
        assert code == 2
        assert "error [not_found]" in capsys.readouterr().err

    def test_degenerate_compare_exits_3(self, capsys):
        assert _main(["compare", "--a", "1,2", "--b", "1,2"]) == 3
        assert "invalid_data" in capsys.readouterr().err

    def test_preprocess_then_verify(self, pipeline_config: Path, tmp_path: Path):
        out = tmp_path / "pre"
        assert _main(["preprocess", "--config", str(pipeline_config), "--out", str(out)]) == 0
        code = _main(
            [
                "verify",
                "--train",
                str(out / "train_raw"),
                "--test",
                str(out / "test_raw"),
                "--scaler",
                str(out / "scaler.json"),
                "--out",
                str(tmp_path / "v"),
            ]
        )
        assert code == 0
        assert _main(["verify-manifest", str(out / "preprocess.manifest.json")]) == 0

    def test_tampered_manifest_exits_1(self, tmp_path: Path):
        assert _main(["params", "--out", str(tmp_path)]) == 0
        (tmp_path / "params.json").write_text("{}\n", encoding="utf-8")
        assert _main(["verify-manifest", str(tmp_path / "params.manifest.json")]) == 1

    @pytest.mark.skipif(not trace_mod.TRACE_ENABLED, reason="tracing disabled by BRIDGE_TRACE")
    def test_trace_written_under_state_root(self, tmp_path: Path):
        assert _main(["params", "--out", str(tmp_path / "p")]) == 0
        trace = tmp_path / ".bridge" / "traces" / "trace.jsonl"
        events = [json.loads(line)["event"] for line in trace.read_text(encoding="utf-8").splitlines()]
        assert events[-2:] == ["command_start", "command_end"]


# ---------------------------------------------------------------------------
# Leakage failures exit 1
# ---------------------------------------------------------------------------


@pytest.fixture()
def identical_windows(tmp_path: Path) -> str:
    ws = make_window_set([i % 2 for i in range(40)], dataset_ids=[i % 5 for i in range(40)])
    stem = tmp_path / "dup" / "windows"
    save_window_set(ws.with_features(np.zeros_like(ws.features)), stem, {"partition": "all", "scaled": False})
    return str(stem)


class TestLeakageExitCodes:
    def test_split(self, identical_windows: str, tmp_path: Path, capsys):
        assert _main(["split", "--windows", identical_windows, "--out", str(tmp_path / "s")]) == 1
        assert "check_failed" in capsys.readouterr().err

    def test_lodo(self, identical_windows: str, tmp_path: Path, capsys):
        assert _main(["lodo", "--windows", identical_windows, "--out", str(tmp_path / "l")]) == 1
        assert "fold 0:" in capsys.readouterr().err

    def test_preprocess(self, tmp_path: Path, capsys):
        config = write_constant_pipeline(tmp_path / "const")
        assert _main(["preprocess", "--config", str(config), "--out", str(tmp_path / "pre")]) == 1
        assert "check_failed" in capsys.readouterr().err

    def test_clean_split_exits_0(self, pipeline_config: Path, tmp_path: Path):
        out = tmp_path / "pre"
        assert _main(["preprocess", "--config", str(pipeline_config), "--out", str(out)]) == 0
        assert _main(["split", "--windows", str(out / "windows"), "--out", str(tmp_path / "s")]) == 0
        assert _main(["lodo", "--windows", str(out / "windows"), "--out", str(tmp_path / "l")]) == 0
