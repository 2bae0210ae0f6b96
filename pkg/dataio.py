#!/usr/bin/python3
"""
Reading designs and responses from CSV, writing reports.

Input CSVs are plain numeric tables without a header: one row per
observation, comma separated. Lines starting with '#' are comments.
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from model_core import DesignMatrix, ModelError, ResponseVector

logger = logging.getLogger(__name__)


class DataError(ValueError):
    """Raised when an input file is missing, unreadable or malformed."""


def _load_table(path: str | Path) -> np.ndarray:
    path = Path(path)
    try:
        table = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    except FileNotFoundError as exc:
        raise DataError(f"Data file not found: {path}") from exc
    except (OSError, ValueError) as exc:
        raise DataError(f"Failed to parse {path}: {exc}") from exc
    if table.size == 0:
        raise DataError(f"Data file is empty: {path}")
    return table


def read_design_csv(path: str | Path) -> DesignMatrix:
    """Read an n x p design matrix."""
    table = _load_table(path)
    try:
        design = DesignMatrix(table)
    except ModelError as exc:
        raise DataError(f"{path}: {exc}") from exc
    logger.info("Read design %s (n=%d, p=%d)", path, design.n, design.p)
    return design


def read_response_csv(path: str | Path) -> ResponseVector:
    """Read a response as one column or one row."""
    table = _load_table(path)
    if min(table.shape) != 1:
        raise DataError(
            f"{path}: response must be a single row or column, "
            f"got shape {table.shape}"
        )
    try:
        return ResponseVector(table.reshape(-1))
    except ModelError as exc:
        raise DataError(f"{path}: {exc}") from exc


def write_json(path: str | Path, payload: dict[str, Any]) -> None:
    """Write a report with sorted keys so equal payloads give equal bytes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(payload, indent=2, sort_keys=True, allow_nan=True) + "\n",
        encoding="utf-8",
    )


def write_csv(path: str | Path, rows: Iterable[dict[str, Any]]) -> None:
    """Write rows as CSV.

    The header is the union of keys in first-seen order. Nothing is written
    for an empty row list.
    """
    rows = list(rows)
    if not rows:
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    keys: list[str] = []
    seen = set()
    for r in rows:
        for k in r.keys():
            if k not in seen:
                seen.add(k)
                keys.append(k)

    with path.open("w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow(r)
