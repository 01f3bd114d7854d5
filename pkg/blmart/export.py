"""Report and CSV writers. Output is byte-identical for identical inputs."""

import csv
import json
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence

import numpy as np

from .engine import Trajectory
from .spine import SpineTrajectory

TRAJECTORY_FIELDS = ["replica", "time", "n_particles", "W", "overflow"]
SNAPSHOT_FIELDS = ["replica", "time", "particle_id", "position", "level"]
SPINE_FIELDS = ["replica", "time", "xi_hat", "wstar", "n_atoms_so_far"]


def jsonable(value: Any) -> Any:
    """Plain JSON types; non-finite floats become the strings ``inf``, ``-inf``, ``nan``."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(value, complex):
        return [jsonable(value.real), jsonable(value.imag)]
    return value


def dumps_report(payload: Dict[str, Any]) -> str:
    return json.dumps(jsonable(payload), indent=2, sort_keys=True) + "\n"


def write_json(path: Path, payload: Dict[str, Any]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(dumps_report(payload), encoding="utf-8")
    tmp.replace(path)
    return path


def _cell(value: Any) -> Any:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, bool):
        return int(value)
    return value


def write_csv(path: Path, rows: Iterable[Dict[str, Any]], fieldnames: Sequence[str]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=list(fieldnames), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _cell(r.get(k, "")) for k in fieldnames})
    return path


def trajectory_rows(trajectories: Sequence[Trajectory]) -> List[Dict[str, Any]]:
    """One row per (replica, query time); times lost to overflow carry empty cells."""
    rows: List[Dict[str, Any]] = []
    for i, traj in enumerate(trajectories):
        for t in traj.query_times:
            snap = traj.snapshot_at(t)
            rows.append({
                "replica": i,
                "time": t,
                "n_particles": len(snap) if snap is not None else "",
                "W": traj.value_at(t) if snap is not None else "",
                "overflow": int(traj.overflow),
            })
    return rows


def snapshot_rows(trajectories: Sequence[Trajectory]) -> List[Dict[str, Any]]:
    rows: List[Dict[str, Any]] = []
    for i, traj in enumerate(trajectories):
        for snap in traj.snapshots:
            order = np.argsort(snap.ids, kind="stable")
            for j in order:
                rows.append({"replica": i, "time": snap.time, "particle_id": int(snap.ids[j]),
                             "position": float(snap.positions[j]),
                             "level": float(snap.levels[j])})
    return rows


def spine_rows(spines: Sequence[SpineTrajectory]) -> List[Dict[str, Any]]:
    rows: List[Dict[str, Any]] = []
    for i, spine in enumerate(spines):
        for t, xi, w in zip(spine.query_times, spine.path, spine.wstar):
            rows.append({"replica": i, "time": t, "xi_hat": xi, "wstar": w,
                         "n_atoms_so_far": len(spine.atoms_until(t))})
    return rows


def write_trajectories(out: Path, trajectories: Sequence[Trajectory],
                       snapshots: bool = False) -> List[Path]:
    written = [write_csv(out / "trajectory.csv", trajectory_rows(trajectories),
                         TRAJECTORY_FIELDS)]
    if snapshots:
        written.append(write_csv(out / "snapshots.csv", snapshot_rows(trajectories),
                                 SNAPSHOT_FIELDS))
    return written


def write_spines(out: Path, spines: Sequence[SpineTrajectory]) -> Path:
    return write_csv(out / "spine.csv", spine_rows(spines), SPINE_FIELDS)
