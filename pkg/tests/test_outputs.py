# tests/test_outputs.py
from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from crosstack.experiments import Measurement
from crosstack.outputs import atomic_write_text, csv_text, format_cell, read_csv, write_csv, write_json


@pytest.mark.parametrize(
    "raw, text",
    [
        (True, "true"),
        (np.bool_(False), "false"),
        (0.1, "0.1"),
        (np.float64(2.2916666666666668e-11), "2.2916666666666668e-11"),
        (np.float64(0.1) * 3, repr(0.1 * 3)),
        (np.int64(7), "7"),
        ("read", "read"),
    ],
)
def test_format_cell(raw: object, text: str) -> None:
    assert format_cell(raw) == text


def test_csv_text_uses_unix_newlines() -> None:
    assert csv_text(("a", "b"), [(1, 0.5), (2, "x")]) == "a,b\n1,0.5\n2,x\n"


def test_atomic_write_creates_parents_and_leaves_no_temp(tmp_path: Path) -> None:
    target = tmp_path / "deep" / "nested" / "file.txt"
    atomic_write_text(target, "hello\n")
    atomic_write_text(target, "again\n")
    assert target.read_text(encoding="utf-8") == "again\n"
    assert [p.name for p in target.parent.iterdir()] == ["file.txt"]


def test_csv_round_trip_preserves_floats(tmp_path: Path) -> None:
    values = [1e-300, 1.0 / 3.0, 39.6e-9]
    path = write_csv(tmp_path / "t.csv", ("k", "v"), enumerate(values))
    rows = read_csv(path)
    assert [float(row["v"]) for row in rows] == values


def test_write_json_is_indented(tmp_path: Path) -> None:
    path = write_json(tmp_path / "m.json", Measurement(name="x", value=1.5))
    text = path.read_text(encoding="utf-8")
    assert text.startswith("{\n  ")
    assert text.endswith("}\n")
    assert '"passed": true' in text
