"""Command-line interface for blmart."""

import argparse
import dataclasses
import logging
import os
import sys
import threading
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, TextIO

from .cumulant import DivergentIntegral, check_criterion, check_lp, cutoff_bias, kappa_prime
from .engine import Caps, TruncationError, default_truncation
from .env import Settings, load_env_file, load_settings
from .export import write_json, write_spines, write_trajectories
from .manifest import build_manifest, write_manifest
from .mc import (
    FALSE_ALARM,
    Z_ACCEPT,
    Estimate,
    ExperimentError,
    lp_moment_check,
    simulate_replicas,
    spine_replicas,
    verify,
)
from .measure import MeasureError
from .quadrature import EPSABS, EPSREL, TAIL_TOL
from .scenario import Scenario, ScenarioError, list_builtins, resolve

logger = logging.getLogger("blmart")

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_CONFIG = 2
EXIT_INTERRUPTED = 130

COMMANDS = ("criteria", "simulate", "spine", "verify", "lp")


class ProgressLine:
    """The current experiment and its elapsed time, redrawn in place on one line."""

    FRAMES = "⠋⠙⠹⠸⠼⠴⠦⠧⠇⠏"

    def __init__(self, label: str, stream: TextIO = sys.stderr, interval: float = 0.1) -> None:
        self.label = label
        self.stream = stream
        self.interval = interval
        self._done = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self._started = 0.0
        self._width = 0

    def start(self) -> "ProgressLine":
        self._started = time.monotonic()
        self._render(self.FRAMES[0])
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()
        return self

    def update(self, label: str) -> None:
        self.label = label

    def _render(self, frame: str) -> None:
        text = f"{frame} {self.label} [{time.monotonic() - self._started:.0f}s]"
        self._width = max(self._width, len(text))
        self.stream.write("\r" + text.ljust(self._width))
        self.stream.flush()

    def _run(self) -> None:
        tick = 1
        while not self._done.wait(self.interval):
            self._render(self.FRAMES[tick % len(self.FRAMES)])
            tick += 1

    def stop(self) -> None:
        self._done.set()
        if self._thread is not None:
            self._thread.join(timeout=1.0)
        self.stream.write("\r" + " " * self._width + "\r")
        self.stream.flush()


def _progress(label: str) -> Optional[ProgressLine]:
    """A running progress line on an interactive stderr, otherwise ``None``."""
    try:
        tty = os.isatty(sys.stderr.fileno())
    except (AttributeError, OSError, ValueError):
        tty = False
    return ProgressLine(label).start() if tty else None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blmart",
        description="Uniform-integrability criteria and Monte Carlo checks for "
                    "additive martingales of branching Lévy processes.",
        epilog="Configuration: ~/.blmart/blmart.env (BLMART_JOBS, BLMART_OUT, BLMART_VERBOSE, "
               "BLMART_MAX_PARTICLES, BLMART_MAX_EVENTS, BLMART_CUTOFF, BLMART_EVENT_BUDGET). "
               "Flags override the file; the shell environment overrides the file too.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.add_parser("scenarios", help="list the built-in scenarios")
    helps = {
        "criteria": "evaluate the uniform-integrability criterion",
        "simulate": "simulate the particle system and write trajectory.csv",
        "spine": "simulate the spine and W*, write spine.csv",
        "verify": "run every experiment of the scenario",
        "lp": "L^p boundedness check and moment experiment",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("scenario", help="scenario file or built-in scenario name")
        p.add_argument("--seed", type=int, help="override the scenario seed")
        p.add_argument("--replicas", type=int, help="override the number of replicas")
        p.add_argument("--truncation", type=float, help="truncation level n > 0")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--jobs", type=int, help="worker processes (default: available cores)")
        p.add_argument("--tolerance-report", action="store_true",
                       help="add quadrature and acceptance tolerances to report.json")
        if name == "simulate":
            p.add_argument("--snapshots", action="store_true",
                           help="also write snapshots.csv with every particle")
        if name == "lp":
            p.add_argument("--p", type=float, dest="p", help="moment order in (1, 2]")
            p.add_argument("--q", type=float, dest="q", help="auxiliary exponent q > p")
    return parser


def configure_logging(verbose: bool) -> None:
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("  [%(levelname)s] %(message)s"))
    root.addHandler(handler)
    root.setLevel(logging.DEBUG if verbose else logging.WARNING)


def _override(scenario: Scenario, args: argparse.Namespace) -> Scenario:
    changes: Dict[str, Any] = {}
    raw = dict(scenario.raw)
    if args.seed is not None:
        changes["seed"] = raw["seed"] = args.seed
    if args.replicas is not None:
        if args.replicas < 1:
            raise ScenarioError([f"--replicas must be >= 1, got {args.replicas}"])
        changes["replicas"] = raw["replicas"] = args.replicas
    if args.truncation is not None:
        if not args.truncation > 0:
            raise ScenarioError([f"--truncation must be > 0, got {args.truncation}"])
        changes["truncation"] = raw["truncation"] = args.truncation
    if not changes:
        return scenario
    return dataclasses.replace(scenario, raw=raw, **changes)


def _budget_truncation(scenario: Scenario, settings: Settings) -> Scenario:
    """Pick a truncation level when the untruncated birth rate is too high to simulate."""
    if scenario.truncation is not None:
        return scenario
    level = default_truncation(scenario.triplet.measure, settings.event_budget, scenario.cutoff)
    if level is None:
        return scenario
    logger.warning("no truncation given; simulating at level %g", level)
    raw = dict(scenario.raw, truncation=level)
    return dataclasses.replace(scenario, truncation=level, raw=raw)


def _tolerances(scenario: Scenario) -> Dict[str, Any]:
    report: Dict[str, Any] = {
        "quadrature": {"epsabs": EPSABS, "epsrel": EPSREL, "tail_tol": TAIL_TOL},
        "acceptance_z": Z_ACCEPT,
        "false_alarm_per_test": FALSE_ALARM,
        "cutoff": scenario.cutoff,
    }
    try:
        report["cutoff_bias"] = cutoff_bias(scenario.triplet, scenario.cutoff)
    except DivergentIntegral as e:
        report["cutoff_bias"] = str(e)
    return report


def _criteria(scenario: Scenario) -> Dict[str, Any]:
    report = check_criterion(scenario.triplet)
    lp = scenario.experiment("lp_moment")
    if lp is not None:
        report.lp = check_lp(scenario.triplet, lp["p"], lp["q"], scan_q=True)
    payload: Dict[str, Any] = {"command": "criteria", "scenario": scenario.name,
                               "criterion": report.to_dict()}
    if scenario.truncation is not None:
        payload["truncation"] = scenario.truncation
        payload["criterion_truncated"] = check_criterion(scenario.model).to_dict()
    expected = scenario.expect.get("verdict")
    if expected is not None:
        payload["expected_verdict"] = expected
        payload["matches_expectation"] = expected == report.verdict
    return payload


def _w_summary(trajectories: List[Any], times: List[float]) -> List[Dict[str, Any]]:
    rows = []
    for t in times:
        values = [tr.value_at(t) for tr in trajectories]
        finite = [v for v in values if v is not None]
        entry: Dict[str, Any] = {"time": t, "recorded": len(finite),
                                 "overflowed": len(values) - len(finite)}
        if finite:
            entry["W"] = Estimate.from_sample(finite).to_dict()
        rows.append(entry)
    return rows


def _simulate(scenario: Scenario, jobs: int, out: Path, snapshots: bool) -> Dict[str, Any]:
    trajectories = simulate_replicas(scenario, jobs=jobs)
    overflowed = sum(1 for tr in trajectories if tr.overflow)
    if overflowed:
        logger.warning("%d of %d replicas hit the caps; their later query times are empty",
                       overflowed, len(trajectories))
    written = write_trajectories(out, trajectories, snapshots)
    return {"command": "simulate", "scenario": scenario.name, "replicas": len(trajectories),
            "overflowed": overflowed, "summary": _w_summary(trajectories, scenario.query_times),
            "outputs": [p.name for p in written]}


def _spine(scenario: Scenario, jobs: int, out: Path) -> Dict[str, Any]:
    spines = spine_replicas(scenario, jobs=jobs)
    write_spines(out, spines)
    kp = kappa_prime(scenario.model)
    summary = []
    for i, t in enumerate(scenario.query_times):
        wstar = Estimate.from_sample([s.wstar[i] for s in spines])
        entry: Dict[str, Any] = {"time": t, "wstar": wstar.to_dict()}
        if t > 0:
            entry["xi_over_t"] = Estimate.from_sample([s.path[i] / t for s in spines]).to_dict()
        summary.append(entry)
    return {"command": "spine", "scenario": scenario.name, "replicas": len(spines),
            "kappa_prime": kp, "summary": summary, "outputs": ["spine.csv"]}


def _lp(scenario: Scenario, args: argparse.Namespace, jobs: int) -> Dict[str, Any]:
    entry = scenario.experiment("lp_moment") or {}
    p = args.p if args.p is not None else entry.get("p")
    q = args.q if args.q is not None else entry.get("q")
    missing = [name for name, v in (("p", p), ("q", q)) if v is None]
    if missing:
        raise ScenarioError([f"lp: missing {' and '.join(missing)} for lp experiments"])
    times = entry.get("times") or [t for t in scenario.query_times if t > 0]
    try:
        rep = lp_moment_check(scenario, p, times, q, jobs=jobs)
    except ValueError as e:
        raise ScenarioError([f"lp: {e}"]) from None
    rep["checker"] = check_lp(scenario.model, p, q, scan_q=True).to_dict()
    return {"command": "lp", "scenario": scenario.name, "lp": rep}


def _run(args: argparse.Namespace, settings: Settings) -> int:
    caps = Caps(settings.max_particles, settings.max_events)
    scenario = _override(resolve(args.scenario, caps, settings.cutoff), args)
    jobs = args.jobs if args.jobs is not None else settings.jobs
    out = args.out if args.out is not None else settings.out / f"{scenario.name}-{args.command}"
    if args.command != "criteria":
        scenario = _budget_truncation(scenario, settings)
    out.mkdir(parents=True, exist_ok=True)

    status = EXIT_OK
    written: List[Path] = []
    progress_line = _progress(f"{args.command} {scenario.name}") \
        if args.command in ("verify", "lp") else None
    try:
        if args.command == "criteria":
            payload = _criteria(scenario)
            print(payload["criterion"]["verdict"])
        elif args.command == "simulate":
            payload = _simulate(scenario, jobs, out, args.snapshots)
            written += [out / name for name in payload["outputs"]]
        elif args.command == "spine":
            payload = _spine(scenario, jobs, out)
            written.append(out / "spine.csv")
        elif args.command == "verify":
            progress = progress_line.update if progress_line else None
            result = verify(scenario, jobs, progress)
            payload = dict(result.to_dict(), command="verify")
            for r in result.results:
                print(f"{'pass' if r.passed else 'FAIL'}  {r.name}")
            if not result.passed:
                status = EXIT_MISMATCH
        else:
            payload = _lp(scenario, args, jobs)
            print(payload["lp"]["checker"]["verdict"])
    finally:
        if progress_line:
            progress_line.stop()

    if args.tolerance_report:
        payload["tolerances"] = _tolerances(scenario)
    written.append(write_json(out / "report.json", payload))
    manifest = build_manifest(args.command, scenario.dumps(), scenario.seed, written,
                              {"scenario": scenario.name, "jobs": jobs})
    write_manifest(out, manifest)
    print(f"Wrote {out}", file=sys.stderr)
    return status


def main(argv: Optional[List[str]] = None) -> None:
    """Main CLI entry point. Wraps the implementation to catch Ctrl-C cleanly."""
    try:
        code = _main_impl(sys.argv[1:] if argv is None else argv)
    except KeyboardInterrupt:
        sys.stderr.write("\r" + " " * 60 + "\r")
        sys.stderr.write("Interrupted.\n")
        sys.exit(EXIT_INTERRUPTED)
    sys.exit(code)


def _main_impl(argv: List[str]) -> int:
    load_env_file()
    settings = load_settings()
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose or settings.verbose)

    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_CONFIG
    if args.command == "scenarios":
        for name in list_builtins():
            print(name)
        return EXIT_OK
    try:
        return _run(args, settings)
    except ScenarioError as e:
        print("Configuration error:", file=sys.stderr)
        for msg in e.errors:
            print(f"  - {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except (MeasureError, TruncationError, DivergentIntegral) as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ExperimentError as e:
        print(f"Experiment error: {e}", file=sys.stderr)
        return EXIT_MISMATCH


if __name__ == "__main__":
    main()
