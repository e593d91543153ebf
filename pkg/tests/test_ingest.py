"""Tests for bridge_bench.ingest, bridge_bench.rng and bridge_bench.hashing."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from bridge_bench.errors import DataError, DegenerateInputError, IngestError
from bridge_bench.hashing import fnv1a64, fnv1a64_rows, matrix_digest
from bridge_bench.ingest import (
    CanonicalMatrix,
    DatasetTable,
    attack_fraction,
    balance_classes,
    balance_target,
    build_canonical_matrix,
    concat_matrices,
    parse_csv,
    read_header_row,
    record_counts,
    zero_fill_audit,
)
from bridge_bench.rng import SplitMix64, fisher_yates, select_subset
from bridge_bench.vocab import SLOT_COUNT, AliasMap, match_columns
from tests.conftest import block_labels, write_dataset_csv


def _table(benign: int, attack: int, dataset_id: int = 0) -> DatasetTable:
    labels = np.array([0] * benign + [1] * attack, dtype=np.int8)
    rows = pd.DataFrame({"x": [str(i) for i in range(len(labels))], "Label": ["y"] * len(labels)}, dtype=str)
    return DatasetTable(
        dataset_id=dataset_id,
        headers=("x", "Label"),
        rows=rows,
        labels=labels,
        label_column="Label",
        benign_values=frozenset({"BENIGN"}),
    )


# ---------------------------------------------------------------------------
# Seeded selection and digests
# ---------------------------------------------------------------------------


class TestRng:
    def test_splitmix_reference_value(self):
        assert SplitMix64(0).next() == 0xE220A8397B1DCDAF

    def test_fisher_yates_is_permutation(self):
        perm = fisher_yates(50, SplitMix64(7))
        assert sorted(perm.tolist()) == list(range(50))

    def test_select_subset_deterministic_and_sorted(self):
        a = select_subset(100, 10, 42)
        assert a.tolist() == select_subset(100, 10, 42).tolist()
        assert a.tolist() == sorted(a.tolist())
        assert len(set(a.tolist())) == 10

    def test_select_subset_all_when_k_exceeds_n(self):
        assert select_subset(5, 9, 1).tolist() == [0, 1, 2, 3, 4]

    def test_negative_k(self):
        with pytest.raises(ValueError):
            select_subset(5, -1, 1)


class TestHashing:
    def test_fnv_reference_values(self):
        assert fnv1a64(b"") == 0xCBF29CE484222325
        assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C

    def test_vectorised_matches_reference(self):
        rows = np.random.default_rng(3).integers(0, 256, size=(9, 17), dtype=np.uint8)
        expected = [fnv1a64(bytes(r)) for r in rows]
        assert [int(h) for h in fnv1a64_rows(rows)] == expected

    def test_matrix_digest_is_sixteen_hex(self):
        digest = matrix_digest(np.ones((2, 3)))
        assert len(digest) == 16
        assert digest == matrix_digest(np.ones((2, 3), dtype=np.float32))


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


class TestParseCsv:
    def test_labels_from_benign_values(self, tmp_path: Path):
        path = write_dataset_csv(tmp_path / "d.csv", ["a", "b"], block_labels(10, 6))
        table = parse_csv(path, "Label", {"BENIGN"}, dataset_id=3)
        assert table.dataset_id == 3
        assert table.class_counts() == (6, 4)
        assert table.feature_headers == ["a", "b"]

    def test_missing_label_column(self, tmp_path: Path):
        path = write_dataset_csv(tmp_path / "d.csv", ["a"], block_labels(4, 2))
        with pytest.raises(IngestError, match="label column"):
            parse_csv(path, "Class", {"BENIGN"})

    def test_missing_file(self, tmp_path: Path):
        with pytest.raises(FileNotFoundError):
            parse_csv(tmp_path / "none.csv", "Label", {"BENIGN"})

    def test_single_bad_row_is_rejected_with_warning(self, tmp_path: Path, caplog):
        path = write_dataset_csv(tmp_path / "d.csv", ["a", "b"], block_labels(200, 100))
        lines = path.read_text(encoding="utf-8").splitlines()
        lines.insert(6, "1.0,BENIGN")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        with caplog.at_level(logging.WARNING, logger="bridge_bench"):
            table = parse_csv(path, "Label", {"BENIGN"})
        assert len(table) == 200
        assert table.rejected_lines == (7,)
        assert "wrong arity" in caplog.text

    def test_too_many_bad_rows_abort(self, tmp_path: Path):
        path = write_dataset_csv(tmp_path / "d.csv", ["a", "b"], block_labels(100, 50))
        with open(path, "a", encoding="utf-8") as fh:
            fh.write("1,2,3,BENIGN\n1,BENIGN\n")
        with pytest.raises(IngestError, match="too many malformed rows") as exc_info:
            parse_csv(path, "Label", {"BENIGN"})
        assert exc_info.value.rejected == [102, 103]

    def test_duplicate_headers_renamed(self, tmp_path: Path):
        path = tmp_path / "d.csv"
        path.write_text("a, a ,Label\n1,2,BENIGN\n", encoding="utf-8")
        assert read_header_row(path) == ["a", "a.1", "Label"]
        assert parse_csv(path, "Label", {"BENIGN"}).headers == ("a", "a.1", "Label")


# ---------------------------------------------------------------------------
# Balancing
# ---------------------------------------------------------------------------


class TestBalancing:
    def test_target_rule(self):
        assert balance_target(10000, 2000) == 5000
        assert balance_target(10000, 7000) == 7000
        assert balance_target(3000, 1000) == 3000

    def test_majority_subsampled_to_floor(self):
        balanced = balance_classes(_table(10000, 2000), seed=42)
        assert balanced.class_counts() == (5000, 2000)

    def test_minority_untouched_and_order_kept(self):
        table = _table(10000, 2000)
        balanced = balance_classes(table, seed=42)
        values = balanced.rows["x"].astype(int).to_numpy()
        assert np.all(np.diff(values) > 0)
        assert set(range(10000, 12000)) <= set(values.tolist())

    def test_seeded(self):
        a = balance_classes(_table(9000, 100), seed=1).rows["x"].tolist()
        b = balance_classes(_table(9000, 100), seed=1).rows["x"].tolist()
        c = balance_classes(_table(9000, 100), seed=2).rows["x"].tolist()
        assert a == b
        assert a != c

    def test_attack_majority(self):
        assert balance_classes(_table(1000, 8000), seed=0).class_counts() == (1000, 5000)

    def test_single_class_is_degenerate(self):
        with pytest.raises(DegenerateInputError):
            balance_classes(_table(10, 0), seed=0)


# ---------------------------------------------------------------------------
# Canonical matrices
# ---------------------------------------------------------------------------


class TestCanonicalMatrix:
    def test_projection_and_sanitisation(self, tmp_path: Path, vocab):
        path = tmp_path / "d.csv"
        path.write_text(
            "Flow Duration,Total Fwd Packets,Label\n"
            "1.5,NaN,BENIGN\n"
            "abc,2,DoS\n"
            "1e40,3,DoS\n",
            encoding="utf-8",
        )
        table = parse_csv(path, "Label", {"BENIGN"})
        report = match_columns(vocab, AliasMap(0), table.feature_headers)
        m = build_canonical_matrix(table, report)
        assert m.values.shape == (3, SLOT_COUNT)
        assert m.values.dtype == np.float32
        assert m.values[:, 0].tolist() == [1.5, 0.0, 0.0]
        assert m.values[:, 1].tolist() == [0.0, 2.0, 3.0]
        assert m.sanitation_count == 3
        assert m.labels.tolist() == [0, 1, 1]
        assert zero_fill_audit(m) == []
        assert len(m.zero_filled) == SLOT_COUNT - 2

    def test_report_for_other_dataset_rejected(self, tmp_path: Path, vocab):
        path = write_dataset_csv(tmp_path / "d.csv", ["Flow Duration"], block_labels(4, 2))
        table = parse_csv(path, "Label", {"BENIGN"}, dataset_id=1)
        with pytest.raises(ValueError, match="report is for dataset 0"):
            build_canonical_matrix(table, match_columns(vocab, AliasMap(0), table.feature_headers))

    def test_attack_fraction(self):
        m = CanonicalMatrix(0, np.zeros((4, SLOT_COUNT), dtype=np.float32), np.array([0, 1, 1, 1], dtype=np.int8))
        assert attack_fraction(m) == 0.75

    def test_attack_fraction_of_empty_matrix(self):
        m = CanonicalMatrix(0, np.zeros((0, SLOT_COUNT), dtype=np.float32), np.zeros(0, dtype=np.int8))
        with pytest.raises(DataError, match="empty matrix"):
            attack_fraction(m)

    def test_shape_is_checked(self):
        with pytest.raises(ValueError):
            CanonicalMatrix(0, np.zeros((2, 5), dtype=np.float32), np.zeros(2, dtype=np.int8))

    def test_concat_in_dataset_order(self):
        a = CanonicalMatrix(2, np.ones((2, SLOT_COUNT), dtype=np.float32), np.array([0, 1], dtype=np.int8))
        b = CanonicalMatrix(0, np.zeros((3, SLOT_COUNT), dtype=np.float32), np.array([1, 1, 0], dtype=np.int8))
        stacked = concat_matrices([a, b])
        assert stacked.dataset_ids.tolist() == [0, 0, 0, 2, 2]
        assert stacked.labels.tolist() == [1, 1, 0, 0, 1]

    def test_record_counts_with_combined_row(self):
        a = CanonicalMatrix(0, np.zeros((4, SLOT_COUNT), dtype=np.float32), np.array([0, 0, 1, 1], dtype=np.int8))
        b = CanonicalMatrix(1, np.zeros((3, SLOT_COUNT), dtype=np.float32), np.array([0, 1, 1], dtype=np.int8))
        rows = record_counts([b, a], {0: "A", 1: "B"})
        assert [(r.name, r.benign, r.attack, r.total) for r in rows] == [
            ("A", 2, 2, 4),
            ("B", 1, 2, 3),
            ("Combined", 3, 4, 7),
        ]
        assert rows[-1].dataset_id is None
        assert rows[0].to_dict()["attack_percent"] == 50.0
