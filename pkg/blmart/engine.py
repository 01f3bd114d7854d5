"""Event-driven simulation of a (truncated) branching Lévy process.

Every particle carries the same branching clock, so with ``N`` living particles
the next branching event arrives after ``Exp(N·R)`` and hits a uniformly chosen
particle. Between events particles are not touched: each one stores the time
of its last update and is moved forward exactly (Gaussian part, drift and
compound-Poisson motion jumps) only when it branches or a snapshot is taken.

Every particle also carries a censoring level, the largest negative jump or
birth offset along its lineage, so that one run at truncation ``N`` contains
the truncated process ``Z^(n)`` for each ``n ≤ N``: the particles of level at
most ``n``.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .cumulant import Triplet, kappa_real
from .measure import (
    BRANCH,
    DEFAULT_CUTOFF,
    MOTION_LARGE,
    MOTION_SMALL,
    NEG_INF,
    AtomSampler,
    BranchingLevyMeasure,
    TruncationError,
)

logger = logging.getLogger(__name__)

Seed = Union[None, int, np.random.SeedSequence]

TRUNCATION_GRID = (0.25, 0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0, 64.0)


class PopulationOverflow(RuntimeError):
    """Caps were exhausted before the first query time."""


@dataclass(frozen=True)
class Caps:
    max_particles: int = 100000
    max_events: int = 20000000


@dataclass
class MotionPart:
    """Configurations with only ``x_1`` finite: jumps of the particle itself."""

    jumps: AtomSampler
    compensation: float
    dropped_variance: float

    @property
    def rate(self) -> float:
        return self.jumps.rate


@dataclass
class BranchPart:
    """Deaths and births, at finite total rate."""

    sampler: AtomSampler
    compensation: float

    @property
    def rate(self) -> float:
        return self.sampler.rate


def _finite(value: complex) -> float:
    return float(value.real) if isinstance(value, complex) else float(value)


def split_measure(measure: BranchingLevyMeasure,
                  cutoff: float = DEFAULT_CUTOFF) -> Tuple[MotionPart, BranchPart]:
    """Split Λ into the motion part (above the cutoff) and the finite-rate branch part."""
    branch = measure.sampler(None, BRANCH, cutoff)
    if not math.isfinite(branch.rate):
        raise TruncationError("branching rate is infinite; truncate further")

    def small_x1(x):  # type: ignore[no-untyped-def]
        x1 = x.first
        return x1 if x1 != NEG_INF and abs(x1) < 1.0 else 0.0

    branch_comp = measure.integrate(small_x1, region=BRANCH, cutoff=cutoff)
    motion_comp = measure.integrate(small_x1, region=MOTION_LARGE, cutoff=cutoff)
    dropped = measure.integrate(lambda x: x.first ** 2, region=MOTION_SMALL, cutoff=cutoff)
    for res, what in ((branch_comp, "branch compensation"), (motion_comp, "motion compensation")):
        if not res.finite:
            raise TruncationError(f"{what} is {res.status}; truncate further")
    jumps = measure.sampler(None, MOTION_LARGE, cutoff)
    return (
        MotionPart(jumps, _finite(motion_comp.value),
                   _finite(dropped.value) if dropped.finite else math.inf),
        BranchPart(branch, _finite(branch_comp.value)),
    )


def _motion_step(sigma2: float, drift: float, motion: MotionPart, dt: float,
                 rng: np.random.Generator) -> Tuple[float, float]:
    """Increment over ``dt`` and the lowest motion jump taken (``+inf`` if none)."""
    x = drift * dt
    if sigma2 > 0.0:
        x += math.sqrt(sigma2 * dt) * float(rng.standard_normal())
    lowest = math.inf
    if motion.rate > 0.0:
        for _ in range(int(rng.poisson(motion.rate * dt))):
            j = motion.jumps.draw(rng).first
            x += j
            lowest = min(lowest, j)
    return x, lowest


def sample_motion_increment(sigma2: float, a_eff: float, motion: MotionPart, dt: float,
                            rng: np.random.Generator) -> float:
    """Compensated Lévy increment of one particle over ``dt``."""
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    return _motion_step(sigma2, a_eff - motion.compensation, motion, dt, rng)[0]


@dataclass
class Snapshot:
    time: float
    ids: np.ndarray
    positions: np.ndarray
    levels: np.ndarray

    def __len__(self) -> int:
        return int(self.positions.size)

    def restrict(self, n: float) -> "Snapshot":
        """Particles of ``Z^(n)``.

        Positions keep the drift of the deepest level simulated. The small-jump
        compensation only sees entries in ``(-1, 1)``, so this is exact for
        ``n >= 1``; below 1 the restricted positions are not those of ``Z^(n)``.
        """
        keep = self.levels <= n
        return Snapshot(self.time, self.ids[keep], self.positions[keep], self.levels[keep])

    def merged(self, other: "Snapshot") -> "Snapshot":
        return Snapshot(self.time,
                        np.concatenate([self.ids, other.ids]),
                        np.concatenate([self.positions, other.positions]),
                        np.concatenate([self.levels, other.levels]))


def additive_martingale(snapshot: Snapshot, theta: float, kappa_theta: float, t: float) -> float:
    """``e^{-tκ(θ)} Σ e^{θ·position}`` with compensated summation."""
    if len(snapshot) == 0:
        return 0.0
    return math.fsum(math.exp(theta * float(x) - t * kappa_theta) for x in snapshot.positions)


@dataclass
class Trajectory:
    query_times: List[float]
    snapshots: List[Snapshot]
    martingale: List[float]
    overflow: bool
    theta: float
    kappa: float
    n_events: int = 0
    truncation: Optional[float] = None
    cutoff_variance: float = 0.0

    @property
    def counts(self) -> List[int]:
        return [len(s) for s in self.snapshots]

    @property
    def complete(self) -> bool:
        return len(self.snapshots) == len(self.query_times)

    def value_at(self, t: float) -> Optional[float]:
        """W at query time ``t``; ``None`` if the run overflowed before it."""
        for s, w in zip(self.snapshots, self.martingale):
            if s.time == t:
                return w
        return None

    def snapshot_at(self, t: float) -> Optional[Snapshot]:
        for s in self.snapshots:
            if s.time == t:
                return s
        return None

    def martingale_at_level(self, n: float, kappa_theta: Optional[float] = None) -> List[float]:
        k = self.kappa if kappa_theta is None else kappa_theta
        return [additive_martingale(s.restrict(n), self.theta, k, s.time) for s in self.snapshots]


@dataclass
class Immigrant:
    """A particle entering the system from outside at ``time``."""

    time: float
    position: float
    level: float = 0.0


class _Population:
    """Flat arena of living particles; removal swaps the last particle in."""

    __slots__ = ("pos", "tlast", "level", "ids", "parent", "next_id")

    def __init__(self) -> None:
        self.pos: List[float] = []
        self.tlast: List[float] = []
        self.level: List[float] = []
        self.ids: List[int] = []
        self.parent: List[int] = []
        self.next_id = 0

    def __len__(self) -> int:
        return len(self.pos)

    def add(self, position: float, t: float, level: float, parent: int = -1) -> None:
        self.pos.append(position)
        self.tlast.append(t)
        self.level.append(level)
        self.ids.append(self.next_id)
        self.parent.append(parent)
        self.next_id += 1

    def remove(self, i: int) -> None:
        for arr in (self.pos, self.tlast, self.level, self.ids, self.parent):
            arr[i] = arr[-1]
            arr.pop()


@dataclass
class _Run:
    triplet: Triplet
    motion: MotionPart
    branch: BranchPart
    rng: np.random.Generator
    caps: Caps
    drift: float = 0.0
    pop: _Population = field(default_factory=_Population)
    n_events: int = 0

    def advance(self, i: int, t: float) -> None:
        dt = t - self.pop.tlast[i]
        if dt <= 0.0:
            return
        inc, lowest = _motion_step(self.triplet.sigma2, self.drift, self.motion, dt, self.rng)
        self.pop.pos[i] += inc
        if lowest < math.inf:
            self.pop.level[i] = max(self.pop.level[i], -lowest)
        self.pop.tlast[i] = t

    def advance_all(self, t: float) -> None:
        n = len(self.pop)
        if n == 0:
            return
        dt = t - np.asarray(self.pop.tlast)
        moved = np.asarray(self.pop.pos) + self.drift * dt
        sigma2 = self.triplet.sigma2
        if sigma2 > 0.0:
            moved += np.sqrt(sigma2 * dt) * self.rng.standard_normal(n)
        if self.motion.rate > 0.0:
            jumps = self.rng.poisson(self.motion.rate * dt)
            for i in np.flatnonzero(jumps):
                for _ in range(int(jumps[i])):
                    j = self.motion.jumps.draw(self.rng).first
                    moved[i] += j
                    self.pop.level[i] = max(self.pop.level[i], -j)
        self.pop.pos = moved.tolist()
        self.pop.tlast = [t] * n

    def snapshot(self, t: float) -> Snapshot:
        self.advance_all(t)
        return Snapshot(t, np.asarray(self.pop.ids, dtype=np.int64),
                        np.asarray(self.pop.pos, dtype=float),
                        np.asarray(self.pop.level, dtype=float))

    def branch_event(self, t: float) -> bool:
        """Apply one branching event; ``False`` when it would break the particle cap."""
        pop = self.pop
        i = int(self.rng.integers(len(pop)))
        self.advance(i, t)
        config = self.branch.sampler.draw(self.rng)
        born = config.size - (0.0 if config.first == NEG_INF else 1.0)
        if len(pop) + born > self.caps.max_particles:
            return False
        origin, level, pid = pop.pos[i], pop.level[i], pop.ids[i]
        for value, mult in config.children():
            for _ in range(int(round(mult))):
                pop.add(origin + value, t, max(level, -value), pid)
        if config.first == NEG_INF:
            pop.remove(i)
        else:
            pop.pos[i] = origin + config.first
            pop.level[i] = max(level, -config.first)
        self.n_events += 1
        return True


def _seed_rng(seed: Seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def simulate(triplet: Triplet, horizon: float, query_times: Sequence[float],
             truncation: Optional[float] = None, caps: Caps = Caps(), seed: Seed = None,
             cutoff: float = DEFAULT_CUTOFF, immigrants: Sequence[Immigrant] = (),
             root: bool = True, kappa_theta: Optional[float] = None) -> Trajectory:
    """Simulate Z up to ``horizon`` and record snapshots and W at ``query_times``.

    ``immigrants`` enter at their times (used for the subtrees hanging off a
    spine); ``root=False`` starts from an empty population.
    """
    queries = sorted(float(q) for q in query_times)
    if any(q < 0 or q > horizon for q in queries):
        raise ValueError(f"query times must lie in [0, {horizon}]")
    model = triplet.truncate(truncation) if truncation is not None else triplet
    motion, branch = split_measure(model.measure, cutoff)
    k = kappa_real(model) if kappa_theta is None else kappa_theta
    run = _Run(model, motion, branch, _seed_rng(seed), caps,
               drift=model.a - branch.compensation - motion.compensation)
    if root:
        run.pop.add(0.0, 0.0, 0.0)
    arrivals = sorted(immigrants, key=lambda m: m.time)
    ai = 0
    qi = 0
    snapshots: List[Snapshot] = []
    overflow = False
    t = 0.0
    rate = branch.rate
    while True:
        n = len(run.pop)
        # superposed per-particle clocks ring at rate n * rate
        t_branch = t + float(run.rng.exponential(1.0 / (n * rate))) if n and rate > 0 else math.inf
        t_arrive = arrivals[ai].time if ai < len(arrivals) else math.inf
        t_next = min(t_branch, t_arrive)
        # particles move lazily, at their own events and at snapshots
        while qi < len(queries) and queries[qi] <= min(t_next, horizon):
            snapshots.append(run.snapshot(queries[qi]))
            qi += 1
        if t_next > horizon or qi == len(queries):
            break
        t = t_next
        if t_arrive <= t_branch:
            # an arrival preempts the pending clock, which is redrawn (memoryless)
            m = arrivals[ai]
            run.pop.add(m.position, m.time, m.level)
            ai += 1
            if len(run.pop) > caps.max_particles:
                overflow = True
                break
            continue
        if run.n_events >= caps.max_events or not run.branch_event(t):
            overflow = True
            break
    if overflow:
        logger.warning("caps hit at t=%.6g with %d particles after %d events",
                       t, len(run.pop), run.n_events)
        if not snapshots and queries:
            raise PopulationOverflow(
                f"caps exhausted at t={t:.6g} before the first query time {queries[0]}")
    martingale = [additive_martingale(s, model.theta, k, s.time) for s in snapshots]
    return Trajectory(queries, snapshots, martingale, overflow, model.theta, k,
                      run.n_events, truncation, motion.dropped_variance)


def default_truncation(measure: BranchingLevyMeasure, budget: float,
                       cutoff: float = DEFAULT_CUTOFF) -> Optional[float]:
    """Deepest truncation level whose retained branching rate fits the event budget.

    ``None`` when the untruncated measure already fits.
    """
    try:
        if measure.sampler(None, BRANCH, cutoff).rate <= budget:
            return None
    except TruncationError:
        pass
    chosen: Optional[float] = None
    for n in TRUNCATION_GRID:
        try:
            rate = measure.truncate(n).sampler(None, BRANCH, cutoff).rate
        except TruncationError:
            break
        if rate > budget:
            break
        chosen = n
    if chosen is None:
        raise TruncationError(f"no truncation level keeps the branching rate below {budget}")
    logger.info("truncation level %g keeps the branching rate within the budget %g",
                chosen, budget)
    return chosen


def branching_rate(measure: BranchingLevyMeasure, cutoff: float = DEFAULT_CUTOFF) -> float:
    return measure.sampler(None, BRANCH, cutoff).rate

