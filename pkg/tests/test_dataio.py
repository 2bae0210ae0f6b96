#!/usr/bin/python3
"""
Tests for CSV inputs and report outputs.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from dataio import (
    DataError,
    read_design_csv,
    read_response_csv,
    write_csv,
    write_json,
)


def test_read_design_skips_comments(tmp_path: Path) -> None:
    """Ensure comment lines are ignored and the shape is n x p."""
    path = tmp_path / "x.csv"
    path.write_text("# design\n1,0,2\n0,1,3\n", encoding="utf-8")
    design = read_design_csv(path)
    assert (design.n, design.p) == (2, 3)
    np.testing.assert_allclose(design.entries[:, 2], [2.0, 3.0])


def test_read_design_missing_file_raises(tmp_path: Path) -> None:
    """Ensure a missing file raises DataError with a clear message."""
    with pytest.raises(DataError, match="not found"):
        read_design_csv(tmp_path / "absent.csv")


def test_read_design_zero_column_raises(tmp_path: Path) -> None:
    """Ensure model validation errors surface as DataError."""
    path = tmp_path / "x.csv"
    path.write_text("1,0\n2,0\n", encoding="utf-8")
    with pytest.raises(DataError, match="all-zero"):
        read_design_csv(path)


def test_read_design_unparsable_raises(tmp_path: Path) -> None:
    """Ensure non-numeric cells raise DataError."""
    path = tmp_path / "x.csv"
    path.write_text("1,a\n2,3\n", encoding="utf-8")
    with pytest.raises(DataError, match="Failed to parse"):
        read_design_csv(path)


@pytest.mark.parametrize("text", ["1\n2\n3\n", "1,2,3\n"])
def test_read_response_row_or_column(tmp_path: Path, text: str) -> None:
    """Ensure a response is accepted as a single row or a single column."""
    path = tmp_path / "y.csv"
    path.write_text(text, encoding="utf-8")
    np.testing.assert_allclose(read_response_csv(path).values, [1.0, 2.0, 3.0])


def test_read_response_table_raises(tmp_path: Path) -> None:
    """Ensure a two-column response is rejected."""
    path = tmp_path / "y.csv"
    path.write_text("1,2\n3,4\n", encoding="utf-8")
    with pytest.raises(DataError, match="single row or column"):
        read_response_csv(path)


def test_write_json_is_sorted_and_creates_parents(tmp_path: Path) -> None:
    """Ensure equal payloads give equal bytes regardless of key order."""
    a = tmp_path / "out" / "a.json"
    b = tmp_path / "out" / "b.json"
    write_json(a, {"z": 1, "a": [1, 2]})
    write_json(b, {"a": [1, 2], "z": 1})
    assert a.read_bytes() == b.read_bytes()
    assert json.loads(a.read_text(encoding="utf-8")) == {"a": [1, 2], "z": 1}


def test_write_csv_uses_union_of_keys(tmp_path: Path) -> None:
    """Ensure later rows can add columns and empty input writes nothing."""
    path = tmp_path / "rows.csv"
    write_csv(path, [{"replicate": 0, "status": "ok"}, {"replicate": 1, "reason": "x"}])
    with path.open(encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert list(rows[0].keys()) == ["replicate", "status", "reason"]
    assert rows[1]["reason"] == "x"

    empty = tmp_path / "empty.csv"
    write_csv(empty, [])
    assert not empty.exists()
