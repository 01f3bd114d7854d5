"""The spine ξ̂, the tilted system Ẑ built around it, and the residual process W*.

Under the tilted law the distinguished particle moves as a Lévy process with
Gaussian part σ², drift â and jumps driven by a Poisson process of intensity
``dt ⊗ Λ̂(dx)``: at an atom ``x`` the spine moves to child ``*`` (chosen with
probability ``e^{θx_*}/⟨x,e_θ⟩``) and the other children start independent
copies of the untilted process.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .cumulant import Triplet, kappa_real, spine_drift
from .engine import Caps, Immigrant, Seed, Snapshot, Trajectory, additive_martingale, simulate
from .measure import (
    DEFAULT_CUTOFF,
    SIMULATED,
    PointConfiguration,
    exp_weight,
    sample_spine_index,
    tilt,
)

logger = logging.getLogger(__name__)

SPINE_ID = -1


@dataclass(frozen=True)
class SpineAtom:
    time: float
    config: PointConfiguration
    index: int
    xi_before: float
    jump: float

    def residual(self, theta: float, kappa_theta: float) -> float:
        """``Σ_{k≠*} e^{θ(ξ̂_{s-} + x_k) - sκ(θ)}``."""
        others = self.config.weighted_sum(theta) - exp_weight(theta, self.jump)
        if others <= 0.0:
            return 0.0
        return others * math.exp(theta * self.xi_before - self.time * kappa_theta)


@dataclass
class SpineTrajectory:
    query_times: List[float]
    path: List[float]
    wstar: List[float]
    levels: List[float]
    theta: float
    kappa: float
    atoms: List[SpineAtom] = field(default_factory=list)
    truncation: Optional[float] = None

    def atoms_until(self, t: float) -> List[SpineAtom]:
        return [a for a in self.atoms if a.time <= t]


def particle_value(config: PointConfiguration, k: int) -> float:
    """Displacement of particle ``k`` (1-based) of a grouped configuration."""
    offset = 0
    for x, m in zip(config.entries, config.multiplicities):
        offset += int(round(m))
        if k <= offset:
            return x
    raise IndexError(f"configuration has no particle {k}")


def _seed_pair(seed: Seed) -> Tuple[np.random.SeedSequence, np.random.SeedSequence]:
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    spine, forest = seq.spawn(2)
    return spine, forest


def simulate_spine(triplet: Triplet, horizon: float, truncation: Optional[float],
                   query_times: Sequence[float], seed: Seed = None,
                   cutoff: float = DEFAULT_CUTOFF) -> SpineTrajectory:
    """Simulate ξ̂ and W* on ``[0, horizon]``."""
    queries = sorted(float(q) for q in query_times)
    if any(q < 0 or q > horizon for q in queries):
        raise ValueError(f"query times must lie in [0, {horizon}]")
    model = triplet.truncate(truncation) if truncation is not None else triplet
    theta = model.theta
    k = kappa_real(model)
    tilted = tilt(model.measure, theta)
    rng = np.random.default_rng(seed)

    def small_tilted(x: PointConfiguration) -> float:
        return math.fsum(m * math.exp(theta * xk) * xk
                         for xk, m in x.groups() if abs(xk) < 1.0)

    sampler = tilted.sampler(SIMULATED, cutoff)
    comp = model.measure.integrate(small_tilted, region=SIMULATED, cutoff=cutoff)
    drift = spine_drift(model) - float(comp.value)
    sigma = math.sqrt(model.sigma2)
    rate = sampler.rate
    if rate <= 0.0:
        logger.debug("tilted measure has zero rate; the spine is a pure Lévy process")

    t, xi, level = 0.0, 0.0, 0.0
    atoms: List[SpineAtom] = []
    residuals: List[float] = []
    path: List[float] = []
    wstar: List[float] = []
    levels: List[float] = []

    def move(to: float) -> None:
        nonlocal t, xi
        dt = to - t
        if dt > 0.0:
            xi += drift * dt
            if sigma > 0.0:
                xi += sigma * math.sqrt(dt) * float(rng.standard_normal())
            t = to

    qi = 0
    while True:
        t_next = t + float(rng.exponential(1.0 / rate)) if rate > 0.0 else math.inf
        while qi < len(queries) and queries[qi] <= min(t_next, horizon):
            move(queries[qi])
            path.append(xi)
            wstar.append(math.fsum(residuals))
            levels.append(level)
            qi += 1
        if t_next > horizon or qi == len(queries):
            break
        move(t_next)
        config = sampler.draw(rng)
        index = sample_spine_index(config, theta, rng)
        jump = particle_value(config, index)
        atom = SpineAtom(t, config, index, xi, jump)
        atoms.append(atom)
        residuals.append(atom.residual(theta, k))
        xi += jump
        level = max(level, -jump)
    return SpineTrajectory(queries, path, wstar, levels, theta, k, atoms, truncation)


def compute_wstar(spine: SpineTrajectory, theta: Optional[float] = None,
                  kappa_theta: Optional[float] = None) -> List[float]:
    """W* at the query times, recomputed from the atoms."""
    th = spine.theta if theta is None else theta
    k = spine.kappa if kappa_theta is None else kappa_theta
    return [math.fsum(a.residual(th, k) for a in spine.atoms_until(q))
            for q in spine.query_times]


def first_big_jump_time(spine: SpineTrajectory, n: float) -> float:
    """First atom time whose selected displacement lies below ``-n``; ``inf`` if none."""
    for atom in spine.atoms:
        if atom.jump < -n:
            return atom.time
    return math.inf


def spine_exponential_path(spine: SpineTrajectory) -> List[float]:
    """``exp(θξ̂_t - tκ(θ))`` at the query times."""
    return [math.exp(spine.theta * x - q * spine.kappa)
            for q, x in zip(spine.query_times, spine.path)]


def simulate_tilted_system(triplet: Triplet, horizon: float, query_times: Sequence[float],
                           truncation: Optional[float] = None, caps: Caps = Caps(),
                           seed: Seed = None, cutoff: float = DEFAULT_CUTOFF,
                           ) -> Tuple[Trajectory, SpineTrajectory]:
    """Spine plus independent untilted subtrees rooted at the children of its atoms.

    The spine appears in every snapshot with id ``-1``.
    """
    spine_seed, forest_seed = _seed_pair(seed)
    spine = simulate_spine(triplet, horizon, truncation, query_times, spine_seed, cutoff)
    model = triplet.truncate(truncation) if truncation is not None else triplet
    immigrants: List[Immigrant] = []
    overflow = False
    cut = math.inf
    level = 0.0
    for atom in spine.atoms:
        pending = atom.config.size - 1.0
        if len(immigrants) + pending > caps.max_particles:
            overflow = True
            cut = atom.time
            break
        k = 0
        for x, m in zip(atom.config.entries, atom.config.multiplicities):
            for _ in range(int(round(m))):
                k += 1
                if k != atom.index and math.isfinite(x):
                    immigrants.append(Immigrant(atom.time, atom.xi_before + x, max(level, -x)))
        level = max(level, -atom.jump)
    queries = [q for q in spine.query_times if q < cut]
    forest = simulate(model, horizon, queries, None, caps, forest_seed, cutoff,
                      immigrants=immigrants, root=False, kappa_theta=spine.kappa)
    snapshots: List[Snapshot] = []
    martingale: List[float] = []
    for snap in forest.snapshots:
        i = spine.query_times.index(snap.time)
        merged = snap.merged(Snapshot(snap.time, np.array([SPINE_ID], dtype=np.int64),
                                      np.array([spine.path[i]]),
                                      np.array([spine.levels[i]])))
        snapshots.append(merged)
        martingale.append(additive_martingale(merged, model.theta, spine.kappa, snap.time))
    if overflow or forest.overflow:
        logger.warning("tilted system overflowed; %d of %d query times recorded",
                       len(snapshots), len(spine.query_times))
    trajectory = Trajectory(spine.query_times, snapshots, martingale,
                            overflow or forest.overflow, model.theta, spine.kappa,
                            forest.n_events, truncation, forest.cutoff_variance)
    return trajectory, spine
