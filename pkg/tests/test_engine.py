"""Tests for engine module."""

import math
from typing import Optional, Sequence

import numpy as np
import pytest

from blmart.cumulant import Triplet
from blmart.engine import (
    Caps,
    PopulationOverflow,
    Snapshot,
    additive_martingale,
    branching_rate,
    default_truncation,
    sample_motion_increment,
    simulate,
    split_measure,
)
from blmart.families import binary_fragmentation, pure_drift, single_jump, yule


def snapshot(positions: Sequence[float], levels: Optional[Sequence[float]] = None) -> Snapshot:
    pos = np.asarray(positions, dtype=float)
    lev = np.zeros(pos.size) if levels is None else np.asarray(levels, dtype=float)
    return Snapshot(0.0, np.arange(pos.size), pos, lev)


def test_additive_martingale_examples() -> None:
    """Test W on hand-made snapshots."""
    assert additive_martingale(snapshot([0.0, math.log(2.0)]), 1.0, 0.0, 0.0) == pytest.approx(3.0)
    assert additive_martingale(snapshot([0.0, 0.0]), 1.0, 1.0, math.log(2.0)) == pytest.approx(1.0)
    assert additive_martingale(snapshot([]), 1.0, 1.0, 1.0) == 0.0


def test_snapshot_restrict() -> None:
    """Test restricting to a censoring level."""
    snap = snapshot([0.0, 1.0, 2.0], [0.5, 1.5, 3.0])
    assert len(snap.restrict(1.0)) == 1
    assert len(snap.restrict(2.0)) == 2
    assert len(snap.merged(snap)) == 6


def test_split_measure_yule() -> None:
    """Test Yule has no motion jumps and branches at rate 1."""
    motion, branch = split_measure(yule())
    assert motion.rate == 0.0
    assert branch.rate == 1.0
    assert branch.compensation == 0.0


def test_split_measure_single_jump() -> None:
    """Test a single jump is motion, compensated by its size."""
    motion, branch = split_measure(single_jump())
    assert motion.rate == 1.0
    assert motion.compensation == pytest.approx(math.log(2.0))
    assert branch.rate == 0.0


def test_deterministic_drift_increment() -> None:
    """Test σ² = 0 without jumps moves by a·dt."""
    motion, _ = split_measure(yule())
    rng = np.random.default_rng(0)
    assert sample_motion_increment(0.0, 2.0, motion, 0.5, rng) == 1.0


def test_increment_needs_positive_dt() -> None:
    """Test dt must be positive."""
    motion, _ = split_measure(yule())
    with pytest.raises(ValueError, match="dt must be > 0"):
        sample_motion_increment(0.0, 1.0, motion, 0.0, np.random.default_rng(0))


def test_compensated_jump_increment_mean() -> None:
    """Test compensated motion jumps have mean zero."""
    motion, _ = split_measure(single_jump())
    rng = np.random.default_rng(4)
    draws = np.array([sample_motion_increment(0.0, 0.0, motion, 1.0, rng) for _ in range(20000)])
    assert abs(draws.mean()) < 4 * math.log(2.0) / math.sqrt(draws.size)


def test_pure_drift_martingale_is_one() -> None:
    """Test W ≡ 1 when Λ = 0 and σ² = 0."""
    traj = simulate(Triplet(0.0, 1.0, pure_drift(), 2.0), 5.0, [0, 1, 2.5, 5], seed=1)
    assert traj.counts == [1, 1, 1, 1]
    assert traj.martingale == pytest.approx([1.0] * 4)
    assert not traj.overflow


def test_yule_mean_population() -> None:
    """Test E N_3 = e^3 for the rate-1 Yule process."""
    triplet = Triplet(0.0, 0.0, yule(), 1.0)
    seeds = np.random.SeedSequence(123).spawn(2000)
    counts = np.array([simulate(triplet, 3.0, [3.0], seed=s).counts[0] for s in seeds])
    se = counts.std(ddof=1) / math.sqrt(counts.size)
    assert abs(counts.mean() - math.exp(3.0)) < 4 * se


def test_bbm_martingale_mean() -> None:
    """Test E W_2 = 1 for BBM with θ = 1/2."""
    triplet = Triplet(1.0, 0.0, yule(), 0.5)
    seeds = np.random.SeedSequence(321).spawn(2000)
    values = np.array([simulate(triplet, 2.0, [2.0], seed=s).martingale[0] for s in seeds])
    se = values.std(ddof=1) / math.sqrt(values.size)
    assert abs(values.mean() - 1.0) < 4 * se


def test_simulation_is_reproducible() -> None:
    """Test the same seed gives the same particles."""
    triplet = Triplet(1.0, 0.0, yule(), 1.0)
    a = simulate(triplet, 3.0, [1.0, 3.0], seed=99)
    b = simulate(triplet, 3.0, [1.0, 3.0], seed=99)
    assert a.martingale == b.martingale
    assert np.array_equal(a.snapshots[-1].positions, b.snapshots[-1].positions)


def test_caps_after_first_query() -> None:
    """Test overflow after a recorded query truncates the trajectory."""
    triplet = Triplet(0.0, 0.0, yule(), 1.0)
    traj = simulate(triplet, 50.0, [0.0, 50.0], caps=Caps(max_particles=1), seed=5)
    assert traj.overflow
    assert traj.counts == [1]
    assert traj.value_at(50.0) is None
    assert traj.value_at(0.0) == 1.0
    assert not traj.complete


def test_caps_before_first_query() -> None:
    """Test overflow before any query time raises."""
    triplet = Triplet(0.0, 0.0, yule(), 1.0)
    with pytest.raises(PopulationOverflow):
        simulate(triplet, 50.0, [50.0], caps=Caps(max_particles=1), seed=5)


def test_query_times_in_range() -> None:
    """Test query times outside [0, horizon] are refused."""
    with pytest.raises(ValueError, match="query times"):
        simulate(Triplet(0.0, 0.0, yule(), 1.0), 1.0, [2.0])


def test_truncated_fragmentation_levels() -> None:
    """Test censoring levels stay within the truncation and nest."""
    triplet = Triplet(0.0, 0.0, binary_fragmentation(alpha=0.5), 1.0)
    traj = simulate(triplet, 0.25, [0.25], truncation=2.0, seed=8)
    snap = traj.snapshots[0]
    assert snap.levels.max() <= 2.0
    assert len(snap.restrict(1.0)) <= len(snap.restrict(2.0)) == len(snap)
    assert traj.martingale_at_level(2.0) == pytest.approx(traj.martingale)


def test_default_truncation() -> None:
    """Test the budgeted truncation level."""
    assert default_truncation(yule(), 50.0) is None
    # retained rate 2(e^{n/2} - √2): 37.3 at n = 6, 106 at n = 8
    assert default_truncation(binary_fragmentation(alpha=0.5), 50.0) == 6.0


def test_branching_rate() -> None:
    """Test the branch rate of a finite measure."""
    assert branching_rate(yule(2.0)) == 2.0
    assert branching_rate(single_jump()) == 0.0


def test_restrict_keeps_positions() -> None:
    """Test restriction only drops particles and leaves the kept positions alone."""
    triplet = Triplet(0.0, 0.0, binary_fragmentation(alpha=0.5), 1.0)
    snap = simulate(triplet, 0.25, [0.25], truncation=4.0, seed=9).snapshots[0]
    for n in (1.0, 2.0, 4.0):
        part = snap.restrict(n)
        assert (part.levels <= n).all()
        assert set(part.ids.tolist()) <= set(snap.ids.tolist())
        lookup = dict(zip(snap.ids.tolist(), snap.positions.tolist()))
        assert [lookup[i] for i in part.ids.tolist()] == part.positions.tolist()
