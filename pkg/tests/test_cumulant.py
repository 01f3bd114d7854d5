"""Tests for cumulant module."""

import math

import pytest

from blmart.cumulant import (
    DEGENERATE,
    UI,
    DivergentIntegral,
    Triplet,
    check_criterion,
    check_lp,
    cutoff_bias,
    kappa,
    kappa_prime,
    kappa_prime_discrepancy,
    kappa_real,
    kappa_second,
    levy_exponent,
    llogl_condition,
    spine_drift,
    spine_exponent,
    spine_exponent_direct,
    tail_integral_dichotomy,
)
from blmart.families import binary_fragmentation, heavy_offspring, pure_drift, single_jump, yule
from blmart.measure import FiniteDiscrete, PointConfiguration


def bbm(theta: float, beta: float = 1.0) -> Triplet:
    return Triplet(1.0, 0.0, yule(beta), theta)


BUILT_IN = [
    Triplet(0.0, 0.0, yule(), 1.0),
    Triplet(1.0, 0.0, yule(), 1.0),
    Triplet(0.0, 0.0, heavy_offspring(), 1.0),
    Triplet(0.0, 0.0, binary_fragmentation(alpha=0.5), 1.0),
    Triplet(0.0, 0.0, single_jump(), 1.0),
]
BUILT_IN_IDS = ["yule", "bbm", "heavy_offspring", "fragmentation", "single_jump"]


def test_triplet_validation() -> None:
    """Test negative σ² and θ are rejected."""
    with pytest.raises(ValueError, match="sigma2 must be >= 0"):
        Triplet(-1.0, 0.0, yule(), 1.0)
    with pytest.raises(ValueError, match="theta must be >= 0"):
        Triplet(0.0, 0.0, yule(), -1.0)


@pytest.mark.parametrize("theta", [0.25, 1.0, 1.3, 2.0])
def test_bbm_kappa(theta: float) -> None:
    """Test κ(θ) = θ²/2 + β and κ'(θ) = θ for branching Brownian motion."""
    triplet = bbm(theta)
    assert kappa_real(triplet) == pytest.approx(theta ** 2 / 2 + 1.0, abs=1e-12)
    assert kappa_prime(triplet) == pytest.approx(theta, abs=1e-12)
    assert kappa_second(triplet) == pytest.approx(1.0, abs=1e-4)


def test_pure_drift_kappa() -> None:
    """Test κ(θ) = aθ with Λ = 0."""
    triplet = Triplet(0.0, 1.0, pure_drift(), 2.0)
    assert kappa_real(triplet) == 2.0
    assert kappa_prime(triplet) == 1.0


def test_yule_kappa_at_zero() -> None:
    """Test κ(0) is the offspring growth rate."""
    assert kappa_real(Triplet(0.0, 0.0, yule(), 1.0), 0.0) == pytest.approx(1.0)


def test_brownian_levy_exponent() -> None:
    """Test Φ(1) = -1/2 for standard Brownian motion."""
    triplet = Triplet(1.0, 0.0, pure_drift(), 0.0)
    assert levy_exponent(triplet, 1.0) == pytest.approx(-0.5 + 0j)


def test_death_in_levy_exponent() -> None:
    """Test a pure death at rate 1 contributes -1."""
    measure = FiniteDiscrete([(1.0, PointConfiguration((-math.inf,)))])
    triplet = Triplet(0.0, 0.0, measure, 1.0)
    assert levy_exponent(triplet, 3.0) == pytest.approx(-1.0 + 0j)


def test_complex_kappa_off_line() -> None:
    """Test complex arguments off Re z = θ are refused."""
    with pytest.raises(ValueError, match="Re z = theta"):
        kappa(bbm(1.0), complex(0.5, 1.0))


@pytest.mark.parametrize("triplet", BUILT_IN + [
    Triplet(0.5, -0.2, FiniteDiscrete([(0.7, PointConfiguration((0.3, -0.4))),
                                       (1.5, PointConfiguration((-1.5, -2.0)))]), 0.8),
], ids=BUILT_IN_IDS + ["finite"])
@pytest.mark.parametrize("r", [0.1, 0.5, 1.0, 2.0, 5.0])
def test_spine_exponent_agrees_with_direct(triplet: Triplet, r: float) -> None:
    """Test κ(θ+ir) - κ(θ) equals the exponent built from the spine characteristics."""
    a = spine_exponent(triplet, r)
    b = spine_exponent_direct(triplet, r)
    assert abs(a - b) < 1e-10


def test_spine_exponent_bbm() -> None:
    """Test Φ̂(r) = ir - r²/2 for BBM with θ = 1."""
    assert spine_exponent(bbm(1.0), 2.0) == pytest.approx(complex(-2.0, 2.0))
    assert spine_exponent(bbm(1.0), 0.0) == 0j


def test_spine_drift() -> None:
    """Test â = κ'(θ) on examples."""
    assert spine_drift(bbm(1.0)) == pytest.approx(1.0)
    assert spine_drift(Triplet(0.0, 0.0, yule(), 1.0)) == pytest.approx(0.0)
    assert spine_drift(Triplet(0.0, 0.0, single_jump(), 1.0)) == pytest.approx(math.log(2.0))


def test_bbm_verdict_flips_at_critical_theta() -> None:
    """Test UI below √(2β), Degenerate above, boundary flagged at it."""
    critical = math.sqrt(2.0)
    below = check_criterion(bbm(critical - 1e-3))
    above = check_criterion(bbm(critical + 1e-3))
    assert below.verdict == UI
    assert not below.boundary
    assert above.verdict == DEGENERATE
    assert not above.boundary
    assert check_criterion(bbm(critical)).boundary
    assert check_criterion(bbm(critical + 5e-7)).boundary


def test_criterion_report_fields() -> None:
    """Test the report carries the side quantities."""
    report = check_criterion(bbm(1.0))
    assert report.cond1
    assert report.margin == pytest.approx(-0.5)
    assert report.cond2.finite
    assert report.supercritical
    assert report.skeleton["holds"]
    d = report.to_dict()
    assert d["verdict"] == UI
    assert d["cond1"]["margin"] == pytest.approx(-0.5)


def test_heavy_offspring_degenerate() -> None:
    """Test the L log L condition fails for the heavy-offspring family."""
    report = check_criterion(Triplet(0.0, 0.0, heavy_offspring(), 1.0))
    assert report.cond1
    assert report.cond2.divergent
    assert report.verdict == DEGENERATE


def test_single_jump_degenerate() -> None:
    """Test a jump of ln 2 at rate 1 with θ = 1 is on the wrong side of cond1."""
    report = check_criterion(Triplet(0.0, 0.0, single_jump(), 1.0))
    # κ = 1 - ln 2, θκ' = ln 2
    assert report.kappa_theta == pytest.approx(1.0 - math.log(2.0))
    assert report.verdict == DEGENERATE


def test_fragmentation_requires_condition_5() -> None:
    """Test κ refuses θ ≤ α for the fragmentation family."""
    with pytest.raises(DivergentIntegral, match=r"\(5\)"):
        kappa_real(Triplet(0.0, 0.0, binary_fragmentation(alpha=0.5), 0.3))


def test_fragmentation_ui() -> None:
    """Test the fragmentation example with θ = 1 is UI."""
    report = check_criterion(Triplet(0.0, 0.0, binary_fragmentation(alpha=0.5), 1.0))
    assert report.verdict == UI


def test_llogl_single_atom() -> None:
    """Test S(log S - 1)^+ for one atom with S = 2e."""
    measure = FiniteDiscrete([(1.0, PointConfiguration((1.0, 1.0)))])
    triplet = Triplet(0.0, 0.0, measure, 1.0)
    s = 2.0 * math.e
    assert llogl_condition(triplet).value == pytest.approx(s * math.log(2.0))
    assert tail_integral_dichotomy(triplet, 1.0).value == pytest.approx(s * math.log(s - 1.0))
    assert tail_integral_dichotomy(triplet, 2.0).value == pytest.approx(s * math.log(s - 1.0) / 2)


def test_tail_integral_needs_positive_c() -> None:
    """Test c must be positive."""
    with pytest.raises(ValueError, match="c must be > 0"):
        tail_integral_dichotomy(bbm(1.0), 0.0)


def test_cutoff_bias_vanishes_without_small_jumps() -> None:
    """Test the neglected variance is zero when every jump is simulated."""
    assert cutoff_bias(Triplet(0.0, 0.0, single_jump(), 1.0)) == 0.0


def test_lp_yule_bounded() -> None:
    """Test the Yule martingale is certified bounded in L^2."""
    report = check_lp(Triplet(0.0, 0.0, yule(), 1.0), 2.0, 3.0)
    assert report.verdict == "Lp-bounded"
    assert report.bounded


def test_lp_bbm_not_certified() -> None:
    """Test BBM at θ = 1 fails the moment clause for p = 2."""
    report = check_lp(bbm(1.0), 2.0, 3.0)
    # κ(2) = 3 = 2κ(1)
    assert not report.clause_moment
    assert report.verdict == "not certified"


def test_lp_argument_ranges() -> None:
    """Test p and q ranges."""
    with pytest.raises(ValueError, match="p must lie"):
        check_lp(bbm(1.0), 2.5, 3.0)
    with pytest.raises(ValueError, match="q must be > p"):
        check_lp(bbm(1.0), 2.0, 1.5)


@pytest.mark.parametrize("triplet", BUILT_IN, ids=BUILT_IN_IDS)
def test_kappa_prime_matches_finite_differences(triplet: Triplet) -> None:
    """Test κ' against the central difference of κ at step 1e-5."""
    gap = kappa_prime_discrepancy(triplet)
    assert gap is not None
    assert gap <= 1e-6


def test_kappa_prime_fragmentation_value() -> None:
    """Test the fragmentation example keeps its κ' after the finite-difference check."""
    triplet = Triplet(0.0, 0.0, binary_fragmentation(alpha=0.5), 1.0)
    value = kappa_prime(triplet)
    assert value == pytest.approx(-3.52549, abs=1e-4)
    gap = kappa_prime_discrepancy(triplet, value)
    assert gap is not None and gap <= 1e-6


@pytest.mark.parametrize("triplet", BUILT_IN, ids=BUILT_IN_IDS)
@pytest.mark.parametrize("c", [0.1, 1.0, 10.0])
def test_tail_integral_agrees_with_cond2(triplet: Triplet, c: float) -> None:
    """Test the time-integral form is finite exactly when the L log L integral is."""
    cond2 = check_criterion(triplet).cond2
    tail = tail_integral_dichotomy(triplet, c)
    assert tail.finite == cond2.finite
    assert tail.divergent == cond2.divergent


def test_tail_integral_heavy_offspring_diverges() -> None:
    """Test the heavy-offspring family is on the infinite side for every c."""
    triplet = Triplet(0.0, 0.0, heavy_offspring(), 1.0)
    assert all(tail_integral_dichotomy(triplet, c).divergent for c in (0.1, 1.0, 10.0))
