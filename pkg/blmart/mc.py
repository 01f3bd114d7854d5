"""Replicated experiments confronting the criteria with simulation.

Replicas get independent streams spawned from one ``SeedSequence``; they fan
out over a process pool whose workers hold the scenario once (so that
tabulated samplers are built once per worker) and results come back in seed
order, which keeps every estimator bit-reproducible regardless of ``jobs``.

Acceptance uses 4 standard errors (two-sided false alarm about 6.3e-5 per
test). Degeneracy is judged on medians and quantiles only, never on means.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from .cumulant import (
    check_criterion,
    check_lp,
    kappa_prime,
    kappa_real,
    levy_exponent,
    spine_exponent,
)
from .engine import (
    PopulationOverflow,
    Snapshot,
    Trajectory,
    additive_martingale,
    simulate,
)
from .measure import BRANCH
from .scenario import EXPERIMENTS, Scenario
from .spine import (
    SpineTrajectory,
    compute_wstar,
    first_big_jump_time,
    simulate_spine,
    simulate_tilted_system,
    spine_exponential_path,
)

logger = logging.getLogger(__name__)

Z_ACCEPT = 4.0
FALSE_ALARM = 2.0 * stats.norm.sf(Z_ACCEPT)
QUANTILES = (0.1, 0.5, 0.9, 0.99)

SeedLike = Union[None, int, np.random.SeedSequence]


class ExperimentError(RuntimeError):
    """An experiment cannot be evaluated (overflowed replicas, bad parameters)."""


@dataclass
class Estimate:
    mean: float
    std_error: float
    n: int
    quantiles: Dict[float, float] = field(default_factory=dict)

    @classmethod
    def from_sample(cls, values: Sequence[float], quantiles: Sequence[float] = QUANTILES,
                    allow_infinite: bool = False) -> "Estimate":
        """Sample mean, standard error and quantiles.

        With ``allow_infinite`` the sample may contain ``+inf`` (overflowed
        replicas); the mean is then reported as ``inf`` and only the quantiles
        are meaningful.
        """
        if len(values) == 0:
            raise ExperimentError("empty sample")
        arr = np.asarray(values, dtype=float)
        infinite = int(np.count_nonzero(~np.isfinite(arr)))
        if infinite and not allow_infinite:
            raise ExperimentError(f"{infinite} of {arr.size} replicas overflowed or diverged")
        qs = {float(p): float(np.quantile(arr, p, method="inverted_cdf")) for p in quantiles}
        if infinite:
            return cls(math.inf, math.inf, int(arr.size), qs)
        mean = math.fsum(arr.tolist()) / arr.size
        se = float(np.std(arr, ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
        return cls(mean, se, int(arr.size), qs)

    def z_against(self, target: float) -> float:
        gap = self.mean - target
        if self.std_error == 0.0:
            return 0.0 if abs(gap) <= 1e-12 * max(1.0, abs(target)) else math.inf
        return abs(gap) / self.std_error

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mean": self.mean,
            "std_error": self.std_error,
            "n": self.n,
            "quantiles": {repr(p): v for p, v in sorted(self.quantiles.items())},
        }


@dataclass
class ExperimentResult:
    name: str
    passed: bool
    report: Dict[str, Any]
    false_alarm: float = FALSE_ALARM

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "passed": self.passed, "false_alarm": self.false_alarm,
                "report": self.report}


# -- replica plumbing ---------------------------------------------------------------------

_WORKER: Dict[str, Any] = {}


def _install(kind: str, scenario: Scenario, params: Dict[str, Any]) -> None:
    _WORKER.update(kind=kind, scenario=scenario, params=params)


def _call(seed: np.random.SeedSequence) -> Any:
    return TASKS[_WORKER["kind"]](_WORKER["scenario"], _WORKER["params"], seed)


def _sequence(seed: SeedLike) -> np.random.SeedSequence:
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


def _fresh(seed: SeedLike) -> np.random.SeedSequence:
    """A copy of ``seed`` whose children start again from the first one."""
    seq = _sequence(seed)
    return np.random.SeedSequence(seq.entropy, spawn_key=seq.spawn_key, pool_size=seq.pool_size)


def run_replicas(kind: str, scenario: Scenario, params: Dict[str, Any], replicas: int,
                 seed: SeedLike = None, jobs: int = 1) -> List[Any]:
    """Run ``replicas`` independent copies of task ``kind``; results in seed order."""
    if replicas < 1:
        raise ExperimentError(f"replicas must be >= 1, got {replicas}")
    seeds = _sequence(seed).spawn(replicas)
    task = TASKS[kind]
    if jobs <= 1 or replicas < 2 * jobs:
        return [task(scenario, params, s) for s in seeds]
    # about 16 chunks per worker; pool.map keeps seed order
    chunk = max(1, replicas // (jobs * 16))
    with ProcessPoolExecutor(max_workers=jobs, initializer=_install,
                             initargs=(kind, scenario, params)) as pool:
        return list(pool.map(_call, seeds, chunksize=chunk))


def _simulate(scenario: Scenario, times: Sequence[float], seed: Any,
              truncation: Any = "scenario") -> Optional[Trajectory]:
    level = scenario.truncation if truncation == "scenario" else truncation
    try:
        return simulate(scenario.triplet, max(times), times, level, scenario.caps, seed,
                        scenario.cutoff)
    except PopulationOverflow:
        return None


def _values(traj: Optional[Trajectory], times: Sequence[float]) -> List[float]:
    """W at ``times``; ``inf`` where the run overflowed first."""
    out = []
    for t in times:
        v = traj.value_at(t) if traj is not None else None
        out.append(math.inf if v is None else v)
    return out


def evaluate_functional(name: str, snapshot: Snapshot, theta: float, kappa_theta: float) -> float:
    """Bounded functionals of the population: ``one``, ``count_le:k``, ``count_ge:k``, ``min_w``."""
    kind, _, arg = name.partition(":")
    if kind == "one":
        return 1.0
    if kind == "count_le":
        return float(len(snapshot) <= int(arg))
    if kind == "count_ge":
        return float(len(snapshot) >= int(arg))
    if kind == "min_w":
        return min(1.0, additive_martingale(snapshot, theta, kappa_theta, snapshot.time))
    raise ExperimentError(f"unknown functional {name!r}")


def _task_martingale(scenario: Scenario, params: Dict[str, Any], seed: Any) -> Dict[str, Any]:
    times = params["times"]
    traj = _simulate(scenario, times, seed)
    counts = [len(s) if s is not None else -1
              for s in ((traj.snapshot_at(t) if traj else None) for t in times)]
    return {"W": _values(traj, times), "N": counts}


def _task_paired(scenario: Scenario, params: Dict[str, Any],
                 seed: Any) -> List[Tuple[float, float]]:
    times, functionals = params["times"], params["functionals"]
    # the plain tree reuses the stream of the tilted system's forest
    _, forest_seed = _fresh(seed).spawn(2)
    traj = _simulate(scenario, times, forest_seed)
    tilted, _ = simulate_tilted_system(scenario.triplet, max(times), times, scenario.truncation,
                                       scenario.caps, _fresh(seed), scenario.cutoff)
    out = []
    for t in times:
        snap = traj.snapshot_at(t) if traj else None
        tsnap = tilted.snapshot_at(t)
        for f in functionals:
            lhs = math.inf
            if snap is not None and traj is not None:
                w = traj.value_at(t)
                value = evaluate_functional(f, snap, traj.theta, traj.kappa)
                lhs = w * value  # type: ignore[operator]
            rhs = (evaluate_functional(f, tsnap, tilted.theta, tilted.kappa)
                   if tsnap is not None else math.inf)
            out.append((lhs, rhs))
    return out


def _task_spine(scenario: Scenario, params: Dict[str, Any], seed: Any) -> Dict[str, List[float]]:
    times = params["times"]
    spine = simulate_spine(scenario.triplet, max(times), scenario.truncation, times, seed,
                           scenario.cutoff)
    monotone = all(b >= a for a, b in zip(spine.wstar, spine.wstar[1:]))
    recomputed = compute_wstar(spine)
    reproducible = all(math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-300)
                       for a, b in zip(spine.wstar, recomputed))
    return {"xi": spine.path, "wstar": spine.wstar, "exp_path": spine_exponential_path(spine),
            "monotone": [float(monotone)], "reproducible": [float(reproducible)]}


def _task_single_particle(scenario: Scenario, params: Dict[str, Any],
                          seed: Any) -> List[float]:
    t = params["t"]
    traj = _simulate(scenario, [t], seed)
    snap = traj.snapshot_at(t) if traj else None
    if snap is None or len(snap) > 1:
        raise ExperimentError("single-particle mode needs a measure without births")
    return [float(snap.positions[0])] if len(snap) == 1 else [math.nan]


def _task_coupling(scenario: Scenario, params: Dict[str, Any], seed: Any) -> List[List[float]]:
    times, levels, kappa_ref = params["times"], params["levels"], params["kappa_ref"]
    traj = _simulate(scenario, times, seed, truncation=max(levels))
    if traj is None:
        return []
    return [[additive_martingale(s.restrict(n), traj.theta, kappa_ref, s.time) for n in levels]
            for s in traj.snapshots]


def _task_trajectory(scenario: Scenario, params: Dict[str, Any], seed: Any) -> Trajectory:
    times = scenario.query_times
    traj = _simulate(scenario, times, seed)
    if traj is None:
        model = scenario.model
        return Trajectory(list(times), [], [], True, model.theta, kappa_real(model),
                          truncation=scenario.truncation)
    return traj


def _task_spine_path(scenario: Scenario, params: Dict[str, Any], seed: Any) -> SpineTrajectory:
    return simulate_spine(scenario.triplet, scenario.horizon, scenario.truncation,
                          scenario.query_times, seed, scenario.cutoff)


def _task_blowup(scenario: Scenario, params: Dict[str, Any], seed: Any) -> List[float]:
    times, level, step = params["times"], params["level"], params["step"]
    horizon = max(times)
    grid = sorted(set(times) | {i * step for i in range(int(horizon / step) + 1)})
    tilted, _ = simulate_tilted_system(scenario.triplet, horizon, grid, scenario.truncation,
                                       scenario.caps, seed, scenario.cutoff)
    out = []
    for t in times:
        seen = [w for s, w in zip(tilted.snapshots, tilted.martingale) if s.time <= t]
        # a run that stopped early on caps counts as having crossed the level
        recorded = len(seen) == sum(1 for g in grid if g <= t)
        out.append(1.0 if (not recorded or max(seen) > level) else 0.0)
    return out


def _task_censoring(scenario: Scenario, params: Dict[str, Any], seed: Any) -> Dict[str, float]:
    n, big, t, functional = params["n"], params["N"], params["t"], params["functional"]
    kappa_n = params["kappa_n"]
    deep_seed, shallow_seed = seed.spawn(2)
    deep, spine = simulate_tilted_system(scenario.triplet, t, [t], big, scenario.caps,
                                         deep_seed, scenario.cutoff)
    shallow, _ = simulate_tilted_system(scenario.triplet, t, [t], n, scenario.caps,
                                        shallow_seed, scenario.cutoff)
    out = {"kept": 0.0, "deep": math.nan, "shallow": math.inf}
    # the deep run counts only while the spine has not been censored at level n
    if first_big_jump_time(spine, n) > t:
        snap = deep.snapshot_at(t)
        out["kept"] = 1.0
        out["deep"] = (evaluate_functional(functional, snap.restrict(n), deep.theta, kappa_n)
                       if snap is not None else math.inf)
    snap = shallow.snapshot_at(t)
    if snap is not None:
        out["shallow"] = evaluate_functional(functional, snap, shallow.theta, kappa_n)
    return out


TASKS: Dict[str, Callable[[Scenario, Dict[str, Any], Any], Any]] = {
    "martingale": _task_martingale,
    "paired": _task_paired,
    "spine": _task_spine,
    "single_particle": _task_single_particle,
    "coupling": _task_coupling,
    "censoring": _task_censoring,
    "blowup": _task_blowup,
    "trajectory": _task_trajectory,
    "spine_path": _task_spine_path,
}


def simulate_replicas(scenario: Scenario, replicas: Optional[int] = None, seed: SeedLike = None,
                      jobs: int = 1) -> List[Trajectory]:
    """Independent trajectories at the scenario's query times; overflowed runs keep their flag."""
    return run_replicas("trajectory", scenario, {}, _replicas(scenario, replicas),
                        _seed(scenario, seed), jobs)


def spine_replicas(scenario: Scenario, replicas: Optional[int] = None, seed: SeedLike = None,
                   jobs: int = 1) -> List[SpineTrajectory]:
    return run_replicas("spine_path", scenario, {}, _replicas(scenario, replicas),
                        _seed(scenario, seed), jobs)


def _replicas(scenario: Scenario, replicas: Optional[int]) -> int:
    return scenario.replicas if replicas is None else int(replicas)


def _seed(scenario: Scenario, seed: SeedLike) -> SeedLike:
    return scenario.seed if seed is None else seed


def _column(rows: Sequence[Dict[str, List[float]]], key: str, i: int) -> List[float]:
    return [row[key][i] for row in rows]


# -- experiments ------------------------------------------------------------------------


def martingale_mean(scenario: Scenario, t: float, replicas: Optional[int] = None,
                    seed: SeedLike = None, jobs: int = 1) -> Estimate:
    """Monte Carlo estimate of ``E[W_t]``, which is 1."""
    rows = run_replicas("martingale", scenario, {"times": [t]}, _replicas(scenario, replicas),
                        _seed(scenario, seed), jobs)
    return Estimate.from_sample(_column(rows, "W", 0))


def martingale_increment(scenario: Scenario, t1: float, t2: float,
                         replicas: Optional[int] = None, seed: SeedLike = None,
                         jobs: int = 1) -> Estimate:
    """Paired estimate of ``E[W_{t2} - W_{t1}]``, which is 0."""
    rows = run_replicas("martingale", scenario, {"times": [t1, t2]},
                        _replicas(scenario, replicas), _seed(scenario, seed), jobs)
    return Estimate.from_sample([r["W"][1] - r["W"][0] for r in rows])


@dataclass
class DegeneracyReport:
    times: List[float]
    medians: List[float]
    q90: List[float]
    overflowed: List[int]
    threshold: float

    @property
    def non_increasing(self) -> bool:
        return all(b <= a for a, b in zip(self.medians, self.medians[1:]))

    @property
    def consistent_with_degeneracy(self) -> bool:
        return self.non_increasing and self.medians[-1] < self.threshold

    def to_dict(self) -> Dict[str, Any]:
        return {"times": self.times, "medians": self.medians, "q90": self.q90,
                "overflowed": self.overflowed, "threshold": self.threshold,
                "non_increasing": self.non_increasing,
                "consistent_with_degeneracy": self.consistent_with_degeneracy}


def degeneracy_diagnostic(scenario: Scenario, time_grid: Sequence[float],
                          replicas: Optional[int] = None, seed: SeedLike = None,
                          jobs: int = 1, threshold: float = 0.1) -> DegeneracyReport:
    """Median and 90th percentile of ``W_t`` across ``time_grid``; overflow counts as +inf."""
    times = sorted(float(t) for t in time_grid)
    rows = run_replicas("martingale", scenario, {"times": times}, _replicas(scenario, replicas),
                        _seed(scenario, seed), jobs)
    medians, q90, overflowed = [], [], []
    for i in range(len(times)):
        col = _column(rows, "W", i)
        est = Estimate.from_sample(col, (0.5, 0.9), allow_infinite=True)
        medians.append(est.quantiles[0.5])
        q90.append(est.quantiles[0.9])
        overflowed.append(sum(1 for v in col if not math.isfinite(v)))
    return DegeneracyReport(times, medians, q90, overflowed, threshold)


@dataclass
class PairedCheck:
    functional: str
    t: float
    lhs: Estimate
    rhs: Estimate
    difference: Estimate

    @property
    def z(self) -> float:
        return self.difference.z_against(0.0)

    @property
    def passed(self) -> bool:
        return self.z < Z_ACCEPT

    def to_dict(self) -> Dict[str, Any]:
        return {"functional": self.functional, "t": self.t, "lhs": self.lhs.to_dict(),
                "rhs": self.rhs.to_dict(), "difference": self.difference.to_dict(),
                "z": self.z, "passed": self.passed}


def _two_sample_z(a: Estimate, b: Estimate) -> float:
    se = math.hypot(a.std_error, b.std_error)
    gap = abs(a.mean - b.mean)
    if se == 0.0:
        return 0.0 if gap <= 1e-12 * max(1.0, abs(a.mean)) else math.inf
    return gap / se


def change_of_measure_check(scenario: Scenario, functionals: Sequence[str],
                            times: Sequence[float], replicas: Optional[int] = None,
                            seed: SeedLike = None, jobs: int = 1) -> List[PairedCheck]:
    """``E[W_t F(Z_t)]`` against ``E[F(Ẑ_t)]`` for bounded ``F``.

    Both sides of a replica share its seed, and z is taken on the per-replica
    difference.
    """
    times = sorted(float(t) for t in times)
    functionals = list(functionals)
    rows = run_replicas("paired", scenario, {"times": times, "functionals": functionals},
                        _replicas(scenario, replicas), _seed(scenario, seed), jobs)
    checks = []
    k = 0
    # rows are laid out time-major, one column per (t, functional)
    for t in times:
        for f in functionals:
            lhs = Estimate.from_sample([row[k][0] for row in rows])
            rhs = Estimate.from_sample([row[k][1] for row in rows])
            diff = Estimate.from_sample([row[k][0] - row[k][1] for row in rows], ())
            checks.append(PairedCheck(f, t, lhs, rhs, diff))
            k += 1
    return checks


def ks_test(sample: Sequence[float], reference: Union[str, Callable[..., Any]] = "expon",
            ) -> Tuple[float, float]:
    """Two-sided Kolmogorov-Smirnov statistic and asymptotic p-value."""
    if len(sample) == 0:
        raise ExperimentError("KS test needs a nonempty sample")
    res = stats.kstest(np.asarray(sample, dtype=float), reference, method="asymp")
    return float(res.statistic), float(res.pvalue)


def yule_limit_law_check(scenario: Scenario, t: float = 8.0,
                         moment_times: Sequence[float] = (2.0, 4.0, 6.0),
                         replicas: Optional[int] = None, seed: SeedLike = None,
                         jobs: int = 1) -> Dict[str, Any]:
    """KS test of ``W_t = e^{-t}N_t`` against Exp(1) and ``E[W_t²] = 2 - e^{-t}``."""
    times = sorted(set([float(t)] + [float(s) for s in moment_times]))
    rows = run_replicas("martingale", scenario, {"times": times},
                        _replicas(scenario, replicas), _seed(scenario, seed), jobs)
    sample = _column(rows, "W", times.index(float(t)))
    if any(not math.isfinite(v) for v in sample):
        raise ExperimentError("Yule replicas overflowed; raise max_particles")
    statistic, pvalue = ks_test(sample, stats.expon.cdf)
    moments = {}
    for s in moment_times:
        est = Estimate.from_sample([w * w for w in _column(rows, "W", times.index(float(s)))])
        target = 2.0 - math.exp(-s)
        moments[repr(float(s))] = {"estimate": est.to_dict(), "target": target,
                                   "z": est.z_against(target)}
    return {"t": t, "statistic": statistic, "pvalue": pvalue, "second_moments": moments,
            "passed": pvalue > 1e-3 and all(m["z"] < Z_ACCEPT for m in moments.values())}


def lp_moment_check(scenario: Scenario, p: float, times: Sequence[float], q: Optional[float] = None,
                    replicas: Optional[int] = None, seed: SeedLike = None,
                    jobs: int = 1) -> Dict[str, Any]:
    """``E[W_t^p]`` across ``times`` next to the L^p checker's verdict.

    ``E[W_t^p]`` is non-decreasing in t for any martingale, so growth means the
    rate of increase over the last interval is significantly above the rate over
    the first one (paired per replica).
    """
    times = sorted(float(t) for t in times)
    if len(times) < 3:
        raise ExperimentError("lp moment check needs at least three times")
    report = check_lp(scenario.triplet, p, q if q is not None else 2.0 * p)
    rows = run_replicas("martingale", scenario, {"times": times},
                        _replicas(scenario, replicas), _seed(scenario, seed), jobs)
    powered = [[w ** p for w in row["W"]] for row in rows]
    estimates = [Estimate.from_sample([r[i] for r in powered], allow_infinite=True)
                 for i in range(len(times))]
    first_dt, last_dt = times[1] - times[0], times[-1] - times[-2]
    accel = [(r[-1] - r[-2]) / last_dt - (r[1] - r[0]) / first_dt for r in powered]
    if all(math.isfinite(v) for v in accel):
        est = Estimate.from_sample(accel, ())
        growth = est.mean > Z_ACCEPT * est.std_error if est.std_error > 0 else est.mean > 0
        acceleration: Any = est.to_dict()
    else:
        growth = True
        acceleration = None
    flagged = report.bounded and growth
    return {"p": p, "times": times, "estimates": [e.to_dict() for e in estimates],
            "acceleration": acceleration, "checker": report.to_dict(), "growth": growth,
            "flagged": flagged, "certifiable": report.bounded}


def spine_law_check(scenario: Scenario, t: float, cf_time: float = 1.0,
                    rs: Sequence[float] = (0.5, 1.0, 2.0), replicas: Optional[int] = None,
                    seed: SeedLike = None, jobs: int = 1) -> Dict[str, Any]:
    """``ξ̂_t/t`` against κ'(θ) and the empirical characteristic function of ``ξ̂``."""
    times = sorted({float(t), float(cf_time)})
    rows = run_replicas("spine", scenario, {"times": times}, _replicas(scenario, replicas),
                        _seed(scenario, seed), jobs)
    model = scenario.model
    slope = Estimate.from_sample([x / t for x in _column(rows, "xi", times.index(float(t)))])
    target = kappa_prime(model)
    xs = np.asarray(_column(rows, "xi", times.index(float(cf_time))))
    cf = []
    for r in rs:
        expected = complex(np.exp(cf_time * spine_exponent(model, r)))
        cf.append(_cf_entry(xs, r, expected))
    z_slope = slope.z_against(target)
    return {"t": t, "slope": slope.to_dict(), "kappa_prime": target, "z_slope": z_slope,
            "characteristic_function": cf,
            "passed": z_slope < 3.0 and all(c["passed"] for c in cf)}


def _cf_entry(xs: np.ndarray, r: float, expected: complex, z_max: float = 5.0) -> Dict[str, Any]:
    finite = np.isfinite(xs)
    cos = np.where(finite, np.cos(r * np.where(finite, xs, 0.0)), 0.0)
    sin = np.where(finite, np.sin(r * np.where(finite, xs, 0.0)), 0.0)
    re = Estimate.from_sample(cos.tolist())
    im = Estimate.from_sample(sin.tolist())
    z_re, z_im = re.z_against(expected.real), im.z_against(expected.imag)
    return {"r": r, "estimate": [re.mean, im.mean], "expected": [expected.real, expected.imag],
            "z": [z_re, z_im], "passed": z_re < z_max and z_im < z_max}


def characteristic_function_check(scenario: Scenario, rs: Sequence[float] = (0.5, 1.0, 2.0),
                                  t: float = 1.0, replicas: Optional[int] = None,
                                  seed: SeedLike = None, jobs: int = 1) -> Dict[str, Any]:
    """Single-particle mode: ``E[e^{irξ_t}]`` against ``exp(tΦ(r))``; death counts as 0."""
    births = scenario.model.measure.integrate(
        lambda x: 1.0 if x.has_children else 0.0, region=BRANCH)
    if births.value != 0.0:
        raise ExperimentError("characteristic function check needs a measure without births")
    rows = run_replicas("single_particle", scenario, {"t": t}, _replicas(scenario, replicas),
                        _seed(scenario, seed), jobs)
    xs = np.asarray([row[0] for row in rows], dtype=float)
    entries = [_cf_entry(xs, r, complex(np.exp(t * levy_exponent(scenario.model, r))))
               for r in rs]
    return {"t": t, "characteristic_function": entries,
            "passed": all(e["passed"] for e in entries)}


def wstar_stability_check(scenario: Scenario, t1: float = 10.0, t2: float = 20.0,
                          replicas: Optional[int] = None, seed: SeedLike = None,
                          jobs: int = 1, tolerance: float = 0.2) -> Dict[str, Any]:
    """99th percentile of W* at ``t1`` and ``t2``, plus pathwise monotonicity."""
    times = [float(t1), float(t2)]
    rows = run_replicas("spine", scenario, {"times": times}, _replicas(scenario, replicas),
                        _seed(scenario, seed), jobs)
    q1 = float(np.quantile(_column(rows, "wstar", 0), 0.99, method="inverted_cdf"))
    q2 = float(np.quantile(_column(rows, "wstar", 1), 0.99, method="inverted_cdf"))
    change = abs(q2 - q1) / q1 if q1 > 0 else math.inf
    monotone = all(row["monotone"][0] == 1.0 for row in rows)
    reproducible = all(row["reproducible"][0] == 1.0 for row in rows)
    exp_median = float(np.median(_column(rows, "exp_path", 1)))
    return {"t1": t1, "t2": t2, "q99": [q1, q2], "relative_change": change,
            "monotone": monotone, "reproducible": reproducible,
            "spine_term_median": exp_median,
            "passed": change < tolerance and monotone and reproducible}


def truncation_coupling_check(scenario: Scenario, levels: Sequence[float] = (1.0, 2.0, 4.0),
                              times: Optional[Sequence[float]] = None,
                              replicas: Optional[int] = None, seed: SeedLike = None,
                              jobs: int = 1) -> Dict[str, Any]:
    """``W^(n)_t`` non-decreasing in ``n`` pathwise, from one run at the deepest level."""
    levels = sorted(float(n) for n in levels)
    if levels[0] < 1.0:
        raise ExperimentError(f"coupled levels must be >= 1, got {levels[0]}")
    times = sorted(float(t) for t in (times or scenario.query_times))
    kappa_ref = kappa_real(scenario.triplet.truncate(max(levels)))
    rows = run_replicas("coupling", scenario,
                        {"times": times, "levels": levels, "kappa_ref": kappa_ref},
                        _replicas(scenario, replicas), _seed(scenario, seed), jobs)
    violations = 0
    checked = 0
    for row in rows:
        for values in row:
            checked += 1
            if any(b < a for a, b in zip(values, values[1:])):
                violations += 1
    return {"levels": levels, "times": times, "kappa_ref": kappa_ref, "checked": checked,
            "violations": violations, "passed": violations == 0 and checked > 0}


def censoring_consistency_check(scenario: Scenario, n: float, big: float, t: float,
                                functional: str = "min_w", replicas: Optional[int] = None,
                                seed: SeedLike = None, jobs: int = 1) -> Dict[str, Any]:
    """Tilted system at level ``big`` restricted to level ``n`` on ``{T^(n)_* > t}``
    against the tilted system of the model truncated at ``n``."""
    if not big > n:
        raise ExperimentError(f"need N > n, got N={big}, n={n}")
    if n < 1.0:
        raise ExperimentError(f"censoring level must be >= 1, got {n}")
    kappa_n = kappa_real(scenario.triplet.truncate(n))
    rows = run_replicas("censoring", scenario,
                        {"n": n, "N": big, "t": t, "functional": functional, "kappa_n": kappa_n},
                        _replicas(scenario, replicas), _seed(scenario, seed), jobs)
    kept = [r["deep"] for r in rows if r["kept"] == 1.0]
    if len(kept) < 2:
        raise ExperimentError("too few replicas kept the spine above the censoring level")
    deep = Estimate.from_sample(kept)
    shallow = Estimate.from_sample([r["shallow"] for r in rows])
    z = _two_sample_z(deep, shallow)
    return {"n": n, "N": big, "t": t, "functional": functional,
            "kept_fraction": len(kept) / len(rows), "deep": deep.to_dict(),
            "shallow": shallow.to_dict(), "z": z, "passed": z < Z_ACCEPT}


def tilted_blowup_check(scenario: Scenario, times: Sequence[float], level: float = 10.0,
                        step: float = 0.25, replicas: Optional[int] = None,
                        seed: SeedLike = None, jobs: int = 1) -> Dict[str, Any]:
    """Fraction of tilted systems with ``max_{s≤t} Ŵ_s > level``, on a grid of mesh ``step``.

    In the degenerate regime Ŵ is unbounded, so the fraction keeps growing with t.
    """
    times = sorted(float(t) for t in times)
    rows = run_replicas("blowup", scenario, {"times": times, "level": level, "step": step},
                        _replicas(scenario, replicas), _seed(scenario, seed), jobs)
    fractions = [Estimate.from_sample([row[i] for row in rows], ()) for i in range(len(times))]
    first, last = fractions[0], fractions[-1]
    se = math.hypot(first.std_error, last.std_error)
    grew = last.mean - first.mean > Z_ACCEPT * se if se > 0 else last.mean > first.mean
    return {"times": times, "level": level, "fractions": [f.mean for f in fractions],
            "std_errors": [f.std_error for f in fractions], "passed": grew}


def survival_coincidence_check(scenario: Scenario, t: float, threshold: float = 1e-3,
                               replicas: Optional[int] = None, seed: SeedLike = None,
                               jobs: int = 1) -> Dict[str, Any]:
    """Fraction of extinct replicas against the fraction with ``W_t`` below ``threshold``."""
    rows = run_replicas("martingale", scenario, {"times": [t]}, _replicas(scenario, replicas),
                        _seed(scenario, seed), jobs)
    extinct = Estimate.from_sample([1.0 if r["N"][0] == 0 else 0.0 for r in rows])
    small = Estimate.from_sample([1.0 if r["W"][0] < threshold else 0.0 for r in rows])
    paired = Estimate.from_sample([(1.0 if r["W"][0] < threshold else 0.0)
                                   - (1.0 if r["N"][0] == 0 else 0.0) for r in rows])
    z = paired.z_against(0.0)
    return {"t": t, "threshold": threshold, "extinct": extinct.to_dict(),
            "small_w": small.to_dict(), "z": z, "passed": z < Z_ACCEPT}


# -- suite --------------------------------------------------------------------------------


def _experiment_seed(scenario: Scenario, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(scenario.seed, spawn_key=(index,))


def _mean_result(name: str, est: Estimate, target: float) -> ExperimentResult:
    z = est.z_against(target)
    return ExperimentResult(name, z < Z_ACCEPT, {"estimate": est.to_dict(), "target": target,
                                                 "z": z})


def run_experiment(scenario: Scenario, entry: Dict[str, Any], index: int = 0,
                   jobs: int = 1) -> ExperimentResult:
    """Dispatch one experiment entry of a scenario."""
    kind = entry["kind"]
    if kind not in EXPERIMENTS:
        raise ExperimentError(f"unknown experiment kind {kind!r}")
    replicas = entry.get("replicas")
    seed = _experiment_seed(scenario, index)
    common: Dict[str, Any] = {"replicas": replicas, "seed": seed, "jobs": jobs}
    name = entry.get("name", kind)
    if kind == "criterion":
        report = check_criterion(scenario.triplet)
        expected = entry.get("verdict", scenario.expect.get("verdict"))
        return ExperimentResult(name, expected is None or report.verdict == expected,
                                {"expected": expected, "criterion": report.to_dict()}, 0.0)
    if kind == "martingale_mean":
        return _mean_result(name, martingale_mean(scenario, entry["t"], **common), 1.0)
    if kind == "martingale_increment":
        est = martingale_increment(scenario, entry["t1"], entry["t2"], **common)
        return _mean_result(name, est, 0.0)
    if kind == "degeneracy":
        rep = degeneracy_diagnostic(scenario, entry["times"], threshold=entry.get("threshold", 0.1),
                                    **common)
        expect = entry.get("expect", "degenerate")
        if expect == "degenerate":
            passed = rep.consistent_with_degeneracy
        elif expect == "monotone":
            passed = rep.non_increasing
        else:
            passed = rep.medians[-1] > entry.get("floor", 0.2)
        return ExperimentResult(name, passed, dict(rep.to_dict(), expect=expect))
    if kind == "change_of_measure":
        checks = change_of_measure_check(scenario, entry["functionals"], entry["times"], **common)
        return ExperimentResult(name, all(c.passed for c in checks),
                                {"checks": [c.to_dict() for c in checks]})
    if kind == "yule_limit":
        rep = yule_limit_law_check(scenario, entry.get("t", 8.0),
                                   entry.get("moment_times", (2.0, 4.0, 6.0)), **common)
        return ExperimentResult(name, rep["passed"], rep)
    if kind == "lp_moment":
        rep = lp_moment_check(scenario, entry["p"], entry["times"], entry.get("q"), **common)
        expected = entry.get("certifiable")
        passed = not rep["flagged"] and (expected is None or rep["certifiable"] == expected)
        return ExperimentResult(name, passed, rep)
    if kind == "spine_law":
        rep = spine_law_check(scenario, entry["t"], entry.get("cf_time", 1.0),
                              entry.get("rs", (0.5, 1.0, 2.0)), **common)
        return ExperimentResult(name, rep["passed"], rep)
    if kind == "characteristic_function":
        rep = characteristic_function_check(scenario, entry.get("rs", (0.5, 1.0, 2.0)),
                                            entry.get("t", 1.0), **common)
        return ExperimentResult(name, rep["passed"], rep)
    if kind == "wstar_stability":
        rep = wstar_stability_check(scenario, entry.get("t1", 10.0), entry.get("t2", 20.0),
                                    tolerance=entry.get("tolerance", 0.2), **common)
        return ExperimentResult(name, rep["passed"], rep)
    if kind == "truncation_coupling":
        rep = truncation_coupling_check(scenario, entry.get("levels", (1.0, 2.0, 4.0)),
                                        entry.get("times"), **common)
        return ExperimentResult(name, rep["passed"], rep, 0.0)
    if kind == "censoring":
        rep = censoring_consistency_check(scenario, entry["n"], entry["N"], entry["t"],
                                          entry.get("functional", "min_w"), **common)
        return ExperimentResult(name, rep["passed"], rep)
    if kind == "tilted_blowup":
        rep = tilted_blowup_check(scenario, entry["times"], entry.get("level", 10.0),
                                  entry.get("step", 0.25), **common)
        return ExperimentResult(name, rep["passed"], rep)
    if kind == "survival":
        rep = survival_coincidence_check(scenario, entry["t"], entry.get("threshold", 1e-3),
                                         **common)
        return ExperimentResult(name, rep["passed"], rep)
    raise ExperimentError(f"unknown experiment kind {kind!r}")


@dataclass
class VerifyReport:
    scenario: str
    results: List[ExperimentResult]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def to_dict(self) -> Dict[str, Any]:
        return {"scenario": self.scenario, "passed": self.passed,
                "results": [r.to_dict() for r in self.results]}


def verify(scenario: Scenario, jobs: int = 1,
           progress: Optional[Callable[[str], None]] = None) -> VerifyReport:
    """Run the criterion expectation and every experiment listed by the scenario."""
    entries: List[Dict[str, Any]] = []
    if scenario.expect.get("verdict") and not any(
            s["kind"] == "criterion" for s in scenario.experiments):
        entries.append({"kind": "criterion"})
    entries.extend(scenario.experiments)
    results = []
    for i, entry in enumerate(entries):
        if progress is not None:
            progress(entry.get("name", entry["kind"]))
        try:
            result = run_experiment(scenario, entry, i, jobs)
        except ExperimentError as e:
            result = ExperimentResult(entry.get("name", entry["kind"]), False, {"error": str(e)})
        logger.info("%s: %s", result.name, "pass" if result.passed else "FAIL")
        results.append(result)
    return VerifyReport(scenario.name, results)
