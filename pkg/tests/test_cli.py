"""Tests for cli module."""

import csv
import io
import json
from pathlib import Path
from typing import Any, Dict, List

import pytest

from blmart.cli import EXIT_CONFIG, EXIT_OK, ProgressLine, build_parser, main


@pytest.fixture(autouse=True)
def isolated_env(monkeypatch: pytest.MonkeyPatch, tmp_path: Path) -> None:
    for key in ("BLMART_JOBS", "BLMART_OUT", "BLMART_VERBOSE", "BLMART_MAX_PARTICLES",
                "BLMART_MAX_EVENTS", "BLMART_CUTOFF", "BLMART_EVENT_BUDGET"):
        monkeypatch.delenv(key, raising=False)
    monkeypatch.setattr("blmart.cli.load_env_file", lambda: {})


def run(argv: List[str]) -> int:
    with pytest.raises(SystemExit) as info:
        main(argv)
    return int(info.value.code or 0)


def write_scenario(path: Path, doc: Dict[str, Any]) -> str:
    path.write_text(json.dumps(doc))
    return str(path)


def test_parser_commands() -> None:
    """Test every subcommand takes the shared flags."""
    parser = build_parser()
    args = parser.parse_args(["simulate", "yule", "--seed", "3", "--replicas", "2",
                              "--jobs", "1", "--snapshots"])
    assert args.command == "simulate"
    assert args.seed == 3 and args.replicas == 2 and args.snapshots
    args = parser.parse_args(["lp", "yule", "--p", "1.5", "--q", "2"])
    assert args.p == 1.5 and args.q == 2.0


def test_no_command(capsys: pytest.CaptureFixture) -> None:
    """Test running without a command prints help and fails."""
    assert run([]) == EXIT_CONFIG
    assert "usage" in capsys.readouterr().err


def test_scenarios_listing(capsys: pytest.CaptureFixture) -> None:
    """Test the built-in scenarios are listed."""
    assert run(["scenarios"]) == EXIT_OK
    names = capsys.readouterr().out.split()
    assert "yule" in names and "bbm_ui" in names


def test_criteria_bbm_ui(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    """Test the criterion on BBM with θ = 1 is UI, with report and manifest."""
    out = tmp_path / "out"
    assert run(["criteria", "bbm_ui", "--out", str(out), "--tolerance-report"]) == EXIT_OK
    assert capsys.readouterr().out.splitlines()[0] == "UI"
    report = json.loads((out / "report.json").read_text())
    assert report["criterion"]["verdict"] == "UI"
    assert report["matches_expectation"]
    assert report["tolerances"]["acceptance_z"] == 4.0
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["scenario_sha256"]) == 64
    assert "report.json" in manifest["outputs"]


def test_criteria_degenerate_bbm(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    """Test θ above √(2β) is Degenerate."""
    assert run(["criteria", "bbm_degenerate", "--out", str(tmp_path)]) == EXIT_OK
    assert capsys.readouterr().out.splitlines()[0] == "Degenerate"


def test_bad_config_exits_2(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    """Test a scenario with σ² < 0 is a configuration error."""
    path = write_scenario(tmp_path / "bad.json",
                          {"triplet": {"sigma2": -1, "theta": 1,
                                       "measure": {"family": "yule"}}})
    assert run(["criteria", path, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "sigma2 must be ≥ 0, got -1" in capsys.readouterr().err


def test_unknown_scenario_exits_2(tmp_path: Path) -> None:
    """Test an unknown built-in name."""
    assert run(["criteria", "nope", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_bad_replicas_flag(tmp_path: Path) -> None:
    """Test --replicas must be positive."""
    assert run(["simulate", "yule", "--replicas", "0", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_simulate_with_tiny_caps(tmp_path: Path) -> None:
    """Test capped replicas are flagged, not fatal."""
    path = write_scenario(tmp_path / "capped.json", {
        "triplet": {"theta": 1, "measure": {"family": "yule"}},
        "horizon": 50, "query_times": [0, 50], "replicas": 3, "seed": 1,
        "caps": {"max_particles": 1},
    })
    out = tmp_path / "out"
    assert run(["simulate", path, "--out", str(out), "--jobs", "1"]) == EXIT_OK
    with (out / "trajectory.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 6
    assert all(r["overflow"] == "1" for r in rows)
    assert all(r["n_particles"] == "" for r in rows if r["time"] == "50.0")
    report = json.loads((out / "report.json").read_text())
    assert report["overflowed"] == 3


def test_simulate_is_reproducible(tmp_path: Path) -> None:
    """Test two runs with the same seed write identical files."""
    for name in ("a", "b"):
        assert run(["simulate", "bbm_ui", "--replicas", "4", "--seed", "11", "--jobs", "1",
                    "--snapshots", "--out", str(tmp_path / name)]) == EXIT_OK
    for fname in ("trajectory.csv", "snapshots.csv", "report.json", "manifest.json"):
        assert (tmp_path / "a" / fname).read_bytes() == (tmp_path / "b" / fname).read_bytes()


def test_spine_command(tmp_path: Path) -> None:
    """Test spine.csv and the slope summary."""
    assert run(["spine", "bbm_ui", "--replicas", "20", "--jobs", "1",
                "--out", str(tmp_path)]) == EXIT_OK
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["kappa_prime"] == pytest.approx(1.0)
    assert (tmp_path / "spine.csv").is_file()


def test_verify_pure_drift(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    """Test the pure-drift suite passes."""
    assert run(["verify", "pure_drift", "--jobs", "1", "--out", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "pass  martingale_mean" in out
    assert json.loads((tmp_path / "report.json").read_text())["passed"]


def test_lp_needs_p_and_q(tmp_path: Path) -> None:
    """Test lp without an lp_moment entry or flags is a configuration error."""
    assert run(["lp", "bbm_ui", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_lp_pure_drift(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    """Test the lp command on a constant martingale."""
    assert run(["lp", "pure_drift", "--jobs", "1", "--out", str(tmp_path)]) == EXIT_OK
    assert capsys.readouterr().out.splitlines()[0] == "not certified"
    report = json.loads((tmp_path / "report.json").read_text())
    assert not report["lp"]["flagged"]


def test_progress_line_shows_label_and_clears() -> None:
    """Test the progress line tracks label updates and blanks itself on stop."""
    stream = io.StringIO()
    line = ProgressLine("verify yule", stream=stream, interval=0.01).start()
    line.update("martingale_mean")
    line.stop()
    text = stream.getvalue()
    assert "verify yule" in text
    assert text.endswith("\r" + " " * line._width + "\r")
    assert not line._thread.is_alive()
