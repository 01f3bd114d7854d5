"""Tests for export module."""

import json
import math
from pathlib import Path

import numpy as np

from blmart.cumulant import Triplet
from blmart.engine import Caps, simulate
from blmart.export import (
    dumps_report,
    jsonable,
    snapshot_rows,
    spine_rows,
    trajectory_rows,
    write_csv,
    write_json,
    write_spines,
    write_trajectories,
)
from blmart.families import yule
from blmart.spine import simulate_spine

BBM = Triplet(1.0, 0.0, yule(), 1.0)


def test_jsonable_non_finite() -> None:
    """Test non-finite floats and numpy scalars."""
    out = jsonable({"a": math.inf, "b": -math.inf, "c": math.nan, "d": np.float64(0.5),
                    "e": np.int64(3), "f": (1, 2), "g": complex(1.0, -1.0), "h": np.bool_(True)})
    assert out == {"a": "inf", "b": "-inf", "c": "nan", "d": 0.5, "e": 3, "f": [1, 2],
                   "g": [1.0, -1.0], "h": True}


def test_dumps_report_sorted() -> None:
    """Test reports are sorted and newline-terminated."""
    text = dumps_report({"b": 1, "a": math.inf})
    assert text.endswith("\n")
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": "inf", "b": 1}


def test_write_json_creates_parents(tmp_path: Path) -> None:
    """Test writing into a missing directory leaves no temp file."""
    path = write_json(tmp_path / "x" / "report.json", {"ok": True})
    assert json.loads(path.read_text()) == {"ok": True}
    assert list(path.parent.iterdir()) == [path]


def test_write_csv_floats_round_trip(tmp_path: Path) -> None:
    """Test floats are written with full precision."""
    value = 1.0 / 3.0
    path = write_csv(tmp_path / "t.csv", [{"x": value, "y": True}], ["x", "y"])
    lines = path.read_text().splitlines()
    assert lines[0] == "x,y"
    assert float(lines[1].split(",")[0]) == value
    assert lines[1].split(",")[1] == "1"


def test_trajectory_rows_overflow() -> None:
    """Test query times lost to overflow carry empty cells."""
    traj = simulate(Triplet(0.0, 0.0, yule(), 1.0), 50.0, [0.0, 50.0],
                    caps=Caps(max_particles=1), seed=5)
    rows = trajectory_rows([traj])
    assert rows[0]["n_particles"] == 1
    assert rows[0]["W"] == 1.0
    assert rows[1]["n_particles"] == ""
    assert rows[1]["W"] == ""
    assert rows[1]["overflow"] == 1


def test_snapshot_rows_sorted_by_particle() -> None:
    """Test snapshot rows list every particle in id order."""
    traj = simulate(BBM, 2.0, [2.0], seed=2)
    rows = snapshot_rows([traj])
    assert len(rows) == traj.counts[0]
    ids = [r["particle_id"] for r in rows]
    assert ids == sorted(ids)


def test_spine_rows() -> None:
    """Test spine rows count atoms so far."""
    spine = simulate_spine(BBM, 3.0, None, [0.0, 3.0], seed=4)
    rows = spine_rows([spine])
    assert [r["time"] for r in rows] == [0.0, 3.0]
    assert rows[0]["n_atoms_so_far"] == 0
    assert rows[1]["n_atoms_so_far"] == len(spine.atoms)


def test_outputs_are_deterministic(tmp_path: Path) -> None:
    """Test the same seed writes the same bytes."""
    for name in ("a", "b"):
        trajs = [simulate(BBM, 2.0, [1.0, 2.0], seed=s) for s in (1, 2)]
        write_trajectories(tmp_path / name, trajs, snapshots=True)
        write_spines(tmp_path / name, [simulate_spine(BBM, 2.0, None, [1.0, 2.0], seed=3)])
    for fname in ("trajectory.csv", "snapshots.csv", "spine.csv"):
        assert (tmp_path / "a" / fname).read_bytes() == (tmp_path / "b" / fname).read_bytes()
