"""End-to-end tests of the pipeline tools through the dispatcher."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np
import pytest

from bridge_bench.server import dispatch
from bridge_bench.tensorio import load_window_set, save_window_set
from bridge_bench.windows import WindowSet
from tests.conftest import DATASET_HEADERS, make_window_set, write_constant_pipeline

FOLD_F1 = [0.3128, 0.6013, 0.5934, 0.6791, 0.6021]


async def _call(state, name: str, **args: Any) -> dict[str, Any]:
    return await dispatch(state, name, args)


def _manifest(result: dict[str, Any]) -> dict[str, Any]:
    return json.loads(Path(result["manifest"]).read_text(encoding="utf-8"))


@pytest.fixture()
async def preprocessed(session_state, pipeline_config: Path, tmp_path: Path) -> dict[str, Any]:
    result = await _call(session_state, "bridge.preprocess", config=str(pipeline_config), out_dir=str(tmp_path / "pre"))
    assert result["ok"], result
    return result


# ---------------------------------------------------------------------------
# align
# ---------------------------------------------------------------------------


class TestAlign:
    async def test_headers_and_csv_agree(self, session_state, dataset_dir: Path, tmp_path: Path):
        by_headers = await _call(
            session_state,
            "bridge.align",
            headers=DATASET_HEADERS[0],
            label_column="Label",
            out_dir=str(tmp_path / "a"),
        )
        by_csv = await _call(
            session_state,
            "bridge.align",
            csv=str(dataset_dir / "ds0.csv"),
            label_column="Label",
            out_dir=str(tmp_path / "b"),
        )
        assert by_headers["ok"] and by_csv["ok"]
        assert by_headers["report"] == by_csv["report"]
        assert by_headers["coverage_percent"] == by_csv["coverage_percent"]
        assert by_headers["outputs"] == ["mapping_ds0.json", "mapping_ds0.txt"]

    async def test_comma_separated_headers(self, session_state, tmp_path: Path):
        result = await _call(
            session_state, "bridge.align", headers="dur,spkts,dpkts", dataset_id=1, out_dir=str(tmp_path)
        )
        assert result["ok"]
        assert result["report"]["dataset_id"] == 1
        assert result["report"]["matched_count"] >= 1
        assert (tmp_path / "mapping_ds1.json").exists()

    async def test_needs_a_source(self, session_state):
        result = await _call(session_state, "bridge.align")
        assert result["error"]["code"] == "invalid_params"
        assert "headers or csv" in result["error"]["message"]

    async def test_missing_vocabulary(self, session_state, tmp_path: Path):
        result = await _call(session_state, "bridge.align", headers="dur", vocab=str(tmp_path / "nope.json"))
        assert result["ok"] is False
        assert result["error"]["code"] == "not_found"

    async def test_ingest_config_supplies_dataset_and_label(self, session_state, dataset_dir: Path, tmp_path: Path):
        ingest = tmp_path / "ds3.ingest.json"
        ingest.write_text(
            json.dumps({"dataset_id": 3, "label_column": "Label", "benign_values": ["BENIGN"]}), encoding="utf-8"
        )
        result = await _call(
            session_state,
            "bridge.align",
            csv=str(dataset_dir / "ds3.csv"),
            ingest=str(ingest),
            out_dir=str(tmp_path / "a"),
        )
        assert result["ok"], result
        assert result["report"]["dataset_id"] == 3
        assert result["outputs"] == ["mapping_ds3.json", "mapping_ds3.txt"]
        assert str(ingest) in _manifest(result)["inputs"]

    async def test_ingest_needs_csv(self, session_state, tmp_path: Path):
        result = await _call(session_state, "bridge.align", headers="dur", ingest=str(tmp_path / "i.json"))
        assert result["error"]["code"] == "invalid_params"

    async def test_invalid_ingest_config(self, session_state, dataset_dir: Path, tmp_path: Path):
        ingest = tmp_path / "bad.json"
        ingest.write_text(json.dumps({"dataset_id": 9, "label_column": "Label", "benign_values": ["BENIGN"]}), encoding="utf-8")
        result = await _call(session_state, "bridge.align", csv=str(dataset_dir / "ds0.csv"), ingest=str(ingest))
        assert result["error"]["code"] == "invalid_config"


# ---------------------------------------------------------------------------
# preprocess / windows / split / verify / lodo / counts
# ---------------------------------------------------------------------------


class TestPreprocess:
    async def test_summary(self, preprocessed):
        summary = preprocessed["summary"]
        assert summary["windows"] == {"benign": 105, "attack": 110, "total": 215}
        assert summary["split"]["partitions"]["train"] == {"benign": 84, "attack": 88, "total": 172}
        assert summary["split"]["partitions"]["test"] == {"benign": 21, "attack": 22, "total": 43}
        assert summary["split"]["leakage"]["passed"] is True
        assert [c["dataset_id"] for c in summary["coverage"]] == [0, 1, 2, 3, 4]
        assert summary["sanitation_count"] == 0

    async def test_outputs_and_manifest(self, preprocessed):
        outputs = set(preprocessed["outputs"])
        for k in range(5):
            assert {f"mapping_ds{k}.json", f"matrix_ds{k}.bt", f"matrix_ds{k}.json"} <= outputs
        for stem in ("windows", "train_raw", "test_raw", "train", "test"):
            assert {f"{stem}.bt", f"{stem}.json"} <= outputs
        assert {"scaler.json", "split.json", "summary.json"} <= outputs
        data = _manifest(preprocessed)
        assert Path(preprocessed["manifest"]).name == "preprocess.manifest.json"
        assert data["seeds"] == {"seed": 42}
        assert sorted(data["outputs"]) == preprocessed["outputs"]

    async def test_rerun_is_byte_identical(self, session_state, pipeline_config: Path, preprocessed, tmp_path: Path):
        again = await _call(
            session_state, "bridge.preprocess", config=str(pipeline_config), out_dir=str(tmp_path / "again")
        )
        assert again["ok"]
        assert _manifest(again)["outputs"] == _manifest(preprocessed)["outputs"]
        assert again["summary"]["split"]["scaler_fit_hash"] == preprocessed["summary"]["split"]["scaler_fit_hash"]

    async def test_other_seed_changes_split(self, session_state, pipeline_config: Path, preprocessed, tmp_path: Path):
        other = await _call(
            session_state, "bridge.preprocess", config=str(pipeline_config), seed=7, out_dir=str(tmp_path / "s7")
        )
        assert other["ok"]
        assert other["summary"]["split"]["scaler_fit_hash"] != preprocessed["summary"]["split"]["scaler_fit_hash"]

    async def test_missing_config(self, session_state, tmp_path: Path):
        result = await _call(session_state, "bridge.preprocess", config=str(tmp_path / "none.yaml"))
        assert result["error"]["code"] == "not_found"

    async def test_invalid_config(self, session_state, tmp_path: Path):
        path = tmp_path / "bad.yaml"
        path.write_text("seed: 1\ndatasets: []\n", encoding="utf-8")
        result = await _call(session_state, "bridge.preprocess", config=str(path))
        assert result["error"]["code"] == "invalid_config"


class TestWindowsAndSplit:
    async def test_windows_from_matrices(self, session_state, preprocessed, pipeline_config: Path, tmp_path: Path):
        result = await _call(
            session_state,
            "bridge.windows",
            matrices=preprocessed["out_dir"],
            config=str(pipeline_config),
            out_dir=str(tmp_path / "w"),
        )
        assert result["ok"], result
        assert result["counts"] == {"benign": 105, "attack": 110, "total": 215}
        assert result["outputs"] == ["windows.bt", "windows.json"]

    async def test_split_matches_preprocess(self, session_state, preprocessed, tmp_path: Path):
        result = await _call(
            session_state,
            "bridge.split",
            windows=str(Path(preprocessed["out_dir"]) / "windows"),
            out_dir=str(tmp_path / "s"),
        )
        assert result["ok"], result
        assert result["split"]["partitions"] == preprocessed["summary"]["split"]["partitions"]
        assert result["split"]["scaler_fit_hash"] == preprocessed["summary"]["split"]["scaler_fit_hash"]

    async def test_temporal_split(self, session_state, preprocessed, tmp_path: Path):
        result = await _call(
            session_state,
            "bridge.split",
            windows=str(Path(preprocessed["out_dir"]) / "windows"),
            mode="temporal",
            out_dir=str(tmp_path / "t"),
        )
        assert result["ok"], result
        assert result["split"]["mode"] == "temporal"
        assert result["split"]["partitions"]["train"]["total"] + result["split"]["partitions"]["test"]["total"] == 215

    async def test_seed_zero_is_honoured(self, session_state, preprocessed, tmp_path: Path):
        result = await _call(
            session_state,
            "bridge.split",
            windows=str(Path(preprocessed["out_dir"]) / "windows"),
            seed=0,
            out_dir=str(tmp_path / "s0"),
        )
        assert result["ok"], result
        assert result["split"]["seed"] == 0
        assert _manifest(result)["seeds"] == {"seed": 0}

    async def test_missing_matrices(self, session_state, tmp_path: Path):
        result = await _call(session_state, "bridge.windows", matrices=str(tmp_path))
        assert result["error"]["code"] == "not_found"


class TestVerify:
    async def test_clean_split_passes(self, session_state, preprocessed, tmp_path: Path):
        out = Path(preprocessed["out_dir"])
        result = await _call(
            session_state,
            "bridge.verify",
            train=str(out / "train_raw"),
            test=str(out / "test_raw"),
            scaler=str(out / "scaler.json"),
            out_dir=str(tmp_path / "v"),
        )
        assert result["ok"], result
        assert result["leakage"]["overlap_count"] == 0
        assert result["leakage"]["scaler_order_ok"] is True

    async def test_planted_duplicate_fails(self, session_state, preprocessed, tmp_path: Path):
        out = Path(preprocessed["out_dir"])
        train, _ = load_window_set(out / "train_raw")
        test, meta = load_window_set(out / "test_raw")
        features = np.array(test.features, copy=True)
        features[0] = train.features[0]
        planted = WindowSet(features, test.labels, test.contexts, test.origins)
        save_window_set(planted, tmp_path / "test_planted", meta)

        result = await _call(
            session_state,
            "bridge.verify",
            train=str(out / "train_raw"),
            test=str(tmp_path / "test_planted"),
            scaler=str(out / "scaler.json"),
            out_dir=str(tmp_path / "v"),
        )
        assert result["ok"] is False
        assert result["error"]["code"] == "check_failed"
        assert result["leakage"]["overlap_count"] == 1
        assert "1 identical window(s)" in result["error"]["message"]
        assert Path(result["manifest"]).exists()

    async def test_zero_tolerance_is_honoured(self, session_state, preprocessed, tmp_path: Path):
        out = Path(preprocessed["out_dir"])
        result = await _call(
            session_state,
            "bridge.verify",
            train=str(out / "train_raw"),
            test=str(out / "test_raw"),
            scaler=str(out / "scaler.json"),
            tolerance=0,
            out_dir=str(tmp_path / "v"),
        )
        # 84/172 benign on train, 21/43 on test: identical fractions
        assert result["ok"], result
        assert _manifest(result)["config"] == {"tolerance": 0.0}

    async def test_scaler_from_scaled_train_fails_order_check(self, session_state, preprocessed, tmp_path: Path):
        out = Path(preprocessed["out_dir"])
        result = await _call(
            session_state,
            "bridge.verify",
            train=str(out / "train"),
            test=str(out / "test"),
            scaler=str(out / "scaler.json"),
            out_dir=str(tmp_path / "v"),
        )
        assert result["error"]["code"] == "check_failed"
        assert result["leakage"]["scaler_order_ok"] is False


class TestLodoAndCounts:
    async def test_five_folds(self, session_state, preprocessed, tmp_path: Path):
        result = await _call(
            session_state,
            "bridge.lodo",
            windows=str(Path(preprocessed["out_dir"]) / "windows"),
            out_dir=str(tmp_path / "lodo"),
        )
        assert result["ok"], result
        assert [f["held_out"] for f in result["folds"]] == [0, 1, 2, 3, 4]
        for fold in result["folds"]:
            assert fold["partitions"]["train"]["total"] == 172
            assert fold["partitions"]["test"]["total"] == 43
            assert fold["leakage"]["overlap_count"] == 0
        assert (tmp_path / "lodo" / "fold_3" / "test.bt").exists()

    async def test_counts(self, session_state, pipeline_config: Path, tmp_path: Path):
        result = await _call(session_state, "bridge.counts", config=str(pipeline_config), out_dir=str(tmp_path))
        assert result["ok"], result
        assert len(result["coverage"]) == 5
        assert result["counts"][-1]["name"] == "Combined"
        assert {"counts.json", "counts.txt"} <= set(result["outputs"])


# ---------------------------------------------------------------------------
# leakage gate on split / lodo / preprocess
# ---------------------------------------------------------------------------


@pytest.fixture()
def identical_windows(tmp_path: Path) -> Path:
    """40 all-zero windows over five datasets, so every test window repeats a training window."""
    ws = make_window_set([i % 2 for i in range(40)], dataset_ids=[i % 5 for i in range(40)])
    ws = ws.with_features(np.zeros_like(ws.features))
    stem = tmp_path / "dup" / "windows"
    save_window_set(ws, stem, {"partition": "all", "scaled": False})
    return stem


class TestLeakageGate:
    async def test_split_fails_on_overlap(self, session_state, identical_windows: Path, tmp_path: Path):
        result = await _call(session_state, "bridge.split", windows=str(identical_windows), out_dir=str(tmp_path / "s"))
        assert result["ok"] is False
        assert result["error"]["code"] == "check_failed"
        assert "8 identical window(s) across partitions" in result["error"]["message"]
        assert result["split"]["leakage"]["overlap_count"] == 8
        assert Path(result["manifest"]).exists()
        assert (tmp_path / "s" / "split.json").exists()

    async def test_lodo_names_failing_folds(self, session_state, identical_windows: Path, tmp_path: Path):
        result = await _call(session_state, "bridge.lodo", windows=str(identical_windows), out_dir=str(tmp_path / "l"))
        assert result["error"]["code"] == "check_failed"
        assert "fold 0: 8 identical window(s) across partitions" in result["error"]["message"]
        assert len(result["folds"]) == 5
        assert (tmp_path / "l" / "fold_4" / "split.json").exists()

    async def test_preprocess_fails_on_constant_rows(self, session_state, tmp_path: Path):
        config = write_constant_pipeline(tmp_path / "const")
        result = await _call(session_state, "bridge.preprocess", config=str(config), out_dir=str(tmp_path / "pre"))
        assert result["error"]["code"] == "check_failed"
        assert "identical window(s)" in result["error"]["message"]
        assert result["summary"]["split"]["leakage"]["overlap_count"] > 0

    async def test_temporal_ratio_gap_is_reported_not_gated(self, session_state, preprocessed, tmp_path: Path):
        result = await _call(
            session_state,
            "bridge.split",
            windows=str(Path(preprocessed["out_dir"]) / "windows"),
            mode="temporal",
            out_dir=str(tmp_path / "t"),
        )
        assert result["ok"], result
        assert result["split"]["leakage"]["ratio_ok"] is False


# ---------------------------------------------------------------------------
# eval / compare
# ---------------------------------------------------------------------------


class TestEval:
    async def test_fold_f1_summary(self, session_state, tmp_path: Path):
        result = await _call(
            session_state,
            "bridge.eval",
            fold_f1=FOLD_F1,
            in_dist_f1=0.8296,
            baselines={"xgb": [0.2, 0.3, 0.4, 0.5, 0.6]},
            out_dir=str(tmp_path),
        )
        assert result["ok"], result
        lodo = result["lodo"]
        assert lodo["mean_f1"] == pytest.approx(0.55774, abs=1e-9)
        assert lodo["gap"] == pytest.approx(0.27186, abs=1e-9)
        assert lodo["baseline_deltas"]["xgb"] == pytest.approx(0.55774 - 0.4, abs=1e-9)
        assert (tmp_path / "lodo.csv").exists()

    async def test_fold_f1_needs_in_dist(self, session_state):
        result = await _call(session_state, "bridge.eval", fold_f1=FOLD_F1)
        assert result["error"]["code"] == "invalid_params"

    async def test_fold_f1_needs_five_values(self, session_state):
        result = await _call(session_state, "bridge.eval", fold_f1=[0.5, 0.6], in_dist_f1=0.8)
        assert result["error"]["code"] == "invalid_params"

    async def test_needs_input(self, session_state):
        result = await _call(session_state, "bridge.eval")
        assert result["error"]["code"] == "invalid_params"


class TestCompare:
    async def test_exact_five_seeds(self, session_state, tmp_path: Path):
        result = await _call(
            session_state,
            "bridge.compare",
            a=[0.9, 0.91, 0.92, 0.93, 0.94],
            b="0.8,0.8,0.8,0.8,0.8",
            name_a="TCH-Net",
            out_dir=str(tmp_path),
        )
        assert result["ok"], result
        assert result["wilcoxon"]["p_value"] == pytest.approx(1 / 32)
        assert result["wilcoxon"]["method"] == "exact"
        assert result["marker"] == "*"
        assert set(result["summaries"]) == {"TCH-Net", "B"}

    async def test_no_nonzero_pairs(self, session_state):
        result = await _call(session_state, "bridge.compare", a=[1.0, 2.0], b=[1.0, 2.0])
        assert result["error"]["code"] == "invalid_data"

    async def test_length_mismatch(self, session_state):
        result = await _call(session_state, "bridge.compare", a=[1.0], b=[1.0, 2.0])
        assert result["error"]["code"] == "invalid_params"


# ---------------------------------------------------------------------------
# model tools
# ---------------------------------------------------------------------------


class TestModelTools:
    async def test_params(self, session_state, tmp_path: Path):
        result = await _call(session_state, "bridge.params", out_dir=str(tmp_path))
        assert result["ok"]
        assert result["params"]["total"] == 2_692_812
        assert result["params"]["reference_total"] == 2_691_696

    async def test_params_subset(self, session_state, tmp_path: Path):
        result = await _call(session_state, "bridge.params", branches="T,H", out_dir=str(tmp_path))
        assert result["ok"]
        assert "c_branch" not in result["params"]["breakdown"]

    async def test_gradcheck(self, session_state, tmp_path: Path):
        result = await _call(session_state, "bridge.gradcheck", fixtures=2, out_dir=str(tmp_path))
        assert result["ok"], result
        assert result["passed"] is True
        assert [f["seed"] for f in result["fixtures"]] == [42, 43]

    async def test_gradcheck_on_written_weights(self, session_state, tmp_path: Path):
        weights = await _call(session_state, "bridge.init_weights", seed=7, out_dir=str(tmp_path / "w"))
        result = await _call(
            session_state, "bridge.gradcheck", weights=weights["weights"], fixtures=1, sample=4, out_dir=str(tmp_path / "g")
        )
        assert result["ok"], result
        fixture = result["fixtures"][0]
        assert fixture["coordinates"] == 4 * len(fixture["per_tensor"])
        assert "fusion.proj.T.weight" in fixture["per_tensor"]
        assert any(Path(p).name == "weights.bw" for p in _manifest(result)["inputs"])

    async def test_gradcheck_missing_weights(self, session_state, tmp_path: Path):
        result = await _call(session_state, "bridge.gradcheck", weights=str(tmp_path / "none.bw"))
        assert result["error"]["code"] == "not_found"

    async def test_seed_zero_is_honoured(self, session_state, tmp_path: Path):
        zero = await _call(session_state, "bridge.init_weights", seed=0, out_dir=str(tmp_path / "a"))
        default = await _call(session_state, "bridge.init_weights", out_dir=str(tmp_path / "b"))
        assert _manifest(zero)["seeds"] == {"seed": 0}
        assert Path(zero["weights"]).read_bytes() != Path(default["weights"]).read_bytes()

    async def test_weights_score_eval(self, session_state, preprocessed, tmp_path: Path):
        weights = await _call(session_state, "bridge.init_weights", out_dir=str(tmp_path / "w"))
        assert weights["ok"], weights
        assert Path(weights["weights"]).name == "weights.bw"

        scored = await _call(
            session_state,
            "bridge.score",
            weights=weights["weights"],
            windows=str(Path(preprocessed["out_dir"]) / "test"),
            out_dir=str(tmp_path / "s"),
        )
        assert scored["ok"], scored
        assert scored["windows"] == 43
        assert set(scored["gates"]["all"]) == {"T", "C", "H"}

        evaluated = await _call(session_state, "bridge.eval", scores=scored["scores"], out_dir=str(tmp_path / "e"))
        assert evaluated["ok"], evaluated
        confusion = evaluated["metrics"]["confusion"]
        assert sum(confusion.values()) == 43
        ids = [row["dataset_id"] for row in evaluated["breakdown"]]
        assert ids == sorted(ids) and sum(row["n"] for row in evaluated["breakdown"]) == 43
        assert (tmp_path / "e" / "curves.csv").exists()

    async def test_score_missing_weights(self, session_state, preprocessed, tmp_path: Path):
        result = await _call(
            session_state,
            "bridge.score",
            weights=str(tmp_path / "none.bw"),
            windows=str(Path(preprocessed["out_dir"]) / "test"),
        )
        assert result["error"]["code"] == "not_found"
