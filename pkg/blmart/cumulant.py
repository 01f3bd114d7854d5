"""Cumulant, exponents and the uniform-integrability / L^p criteria.

``κ(z) = σ²z²/2 + az + ∫(e^{zx_1} - 1 - zx_1 1{|x_1|<1} + Σ_{k≥2} e^{zx_k}) Λ(dx)``

The additive martingale ``W_t = e^{-tκ(θ)} ⟨Z_t, e_θ⟩`` is uniformly integrable
iff ``θκ'(θ) < κ(θ)`` and ``∫ S (log S - 1)^+ Λ(dx) < ∞`` with ``S = ⟨x, e_θ⟩``;
otherwise its terminal value is 0.
"""

import cmath
import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Any, Dict, Optional, Union

from .measure import (
    DEFAULT_CUTOFF,
    MOTION_SMALL,
    NEG_INF,
    BranchingLevyMeasure,
    PointConfiguration,
    exp_weight,
    exponential_integrability,
)
from .quadrature import UNDETERMINED, IntegralResult

logger = logging.getLogger(__name__)

UI = "UI"
DEGENERATE = "Degenerate"
UNDETERMINED_VERDICT = "Undetermined"

BOUNDARY_MARGIN = 1e-12
BOUNDARY_THETA = 1e-6
FD_STEP = 1e-5
FD_TOL = 1e-6


class DivergentIntegral(ArithmeticError):
    """An integral needed by κ, κ', Φ or â diverges."""

    def __init__(self, condition: str, detail: str = "") -> None:
        self.condition = condition
        msg = f"condition {condition} fails"
        super().__init__(f"{msg}: {detail}" if detail else msg)


@dataclass(frozen=True)
class Triplet:
    """``(σ², a, Λ)`` together with the martingale parameter θ."""

    sigma2: float
    a: float
    measure: BranchingLevyMeasure
    theta: float

    def __post_init__(self) -> None:
        if self.sigma2 < 0:
            raise ValueError(f"sigma2 must be >= 0, got {self.sigma2}")
        if self.theta < 0:
            raise ValueError(f"theta must be >= 0, got {self.theta}")

    def truncate(self, n: float) -> "Triplet":
        return replace(self, measure=self.measure.truncate(n))

    def with_theta(self, theta: float) -> "Triplet":
        return replace(self, theta=theta)


def _cexp(z: complex, x: float) -> complex:
    if x == NEG_INF:
        return 0j
    return cmath.exp(z * x)


def _small(x: float) -> float:
    return 1.0 if abs(x) < 1.0 else 0.0


@lru_cache(maxsize=256)
def condition_4(measure: BranchingLevyMeasure) -> IntegralResult:
    """``∫ (1 ∧ x_1²) Λ(dx)``; a death counts as 1."""
    return measure.integrate(lambda x: 1.0 if x.first == NEG_INF else min(1.0, x.first ** 2))


@lru_cache(maxsize=256)
def condition_5(measure: BranchingLevyMeasure, theta: float) -> IntegralResult:
    return exponential_integrability(measure, theta)


@dataclass(frozen=True)
class _KappaIntegrand:
    """``e^{zx_1} - 1 - zx_1 1{|x_1|<1} + Σ_{k≥2} e^{zx_k}`` at a real ``z``."""

    z: float

    def __call__(self, x: PointConfiguration) -> float:
        z = self.z
        return float(x.split_sum(
            lambda x1: exp_weight(z, x1) - 1.0 - (z * x1 * _small(x1) if x1 != NEG_INF else 0.0),
            lambda xk: math.exp(z * xk)))


@dataclass(frozen=True)
class _CentralDifference:
    """``(f_{z+h} - f_{z-h}) / 2h`` of the κ integrand, pointwise."""

    z: float
    h: float

    def __call__(self, x: PointConfiguration) -> float:
        up, down = _KappaIntegrand(self.z + self.h), _KappaIntegrand(self.z - self.h)
        return (up(x) - down(x)) / (2.0 * self.h)


def _require(triplet: Triplet, re_z: float) -> None:
    c4 = condition_4(triplet.measure)
    if not c4.finite:
        raise DivergentIntegral("(4)", f"∫(1∧x_1²)Λ is {c4.status}")
    c5 = condition_5(triplet.measure, re_z)
    if not c5.finite:
        raise DivergentIntegral("(5)", f"exponential integral at {re_z} is {c5.status}")


def _checked(result: IntegralResult, condition: str, what: str) -> IntegralResult:
    if not result.finite:
        raise DivergentIntegral(condition, f"{what} is {result.status}")
    return result


def kappa(triplet: Triplet, z: Union[None, float, complex] = None) -> Union[float, complex]:
    """κ(z); ``z`` defaults to θ. Complex arguments must have real part θ."""
    if z is None:
        z = triplet.theta
    if isinstance(z, complex):
        if z.imag == 0.0:
            z = z.real
        elif not math.isclose(z.real, triplet.theta, rel_tol=0.0, abs_tol=1e-15):
            raise ValueError(f"complex kappa is defined on Re z = theta only, got {z}")
    _require(triplet, float(z.real) if isinstance(z, complex) else float(z))
    if isinstance(z, complex):
        zc = z

        def integrand_c(x: PointConfiguration) -> complex:
            return complex(x.split_sum(
                lambda x1: _cexp(zc, x1) - 1.0 - zc * (x1 * _small(x1) if x1 != NEG_INF else 0.0),
                lambda xk: cmath.exp(zc * xk)))

        res = _checked(triplet.measure.integrate(integrand_c, complex_valued=True), "(5)", "κ")
        return 0.5 * triplet.sigma2 * zc * zc + triplet.a * zc + complex(res.value)
    zr = float(z)
    res = _checked(triplet.measure.integrate(_KappaIntegrand(zr)), "(5)", "κ")
    return 0.5 * triplet.sigma2 * zr * zr + triplet.a * zr + float(res.value)


def kappa_real(triplet: Triplet, z: Optional[float] = None) -> float:
    return float(kappa(triplet, triplet.theta if z is None else float(z)))  # type: ignore[arg-type]


def kappa_prime(triplet: Triplet) -> float:
    """κ'(θ), with a central finite-difference cross-check logged on disagreement."""
    theta = triplet.theta
    _require(triplet, theta)

    def integrand(x: PointConfiguration) -> float:
        return float(x.split_sum(
            lambda x1: 0.0 if x1 == NEG_INF else x1 * (math.exp(theta * x1) - _small(x1)),
            lambda xk: xk * math.exp(theta * xk)))

    res = _checked(triplet.measure.integrate(integrand), "(5)", "κ'")
    value = triplet.sigma2 * theta + triplet.a + float(res.value)
    gap = kappa_prime_discrepancy(triplet, value)
    if gap is not None and gap > FD_TOL:
        logger.warning("κ'(%g) = %.12g disagrees with finite differences (relative gap %.2e)",
                       theta, value, gap)
    return value


def kappa_prime_discrepancy(triplet: Triplet, value: Optional[float] = None) -> Optional[float]:
    """Relative gap between κ' and the central difference of κ at step 1e-5.

    The two evaluations of κ share one quadrature: the differenced integrand is
    integrated directly, so the quadrature tolerance is not divided by 2h.
    """
    theta = triplet.theta
    if theta - FD_STEP < 0:
        return None
    if value is None:
        value = kappa_prime(triplet)
    try:
        _require(triplet, theta + FD_STEP)
        _require(triplet, theta - FD_STEP)
        res = _checked(triplet.measure.integrate(_CentralDifference(theta, FD_STEP)),
                       "(5)", "Δκ")
    except DivergentIntegral:
        return None
    # σ²z²/2 + az differences exactly to σ²θ + a
    fd = triplet.sigma2 * theta + triplet.a + float(res.value)
    return abs(fd - value) / max(1.0, abs(value))


def kappa_second(triplet: Triplet, h: float = 1e-4) -> float:
    """κ''(θ) by finite differences; one-sided near the edge of the domain."""
    theta = triplet.theta
    k0 = kappa_real(triplet)
    try:
        if theta - h < 0:
            raise DivergentIntegral("(5)")
        return (kappa_real(triplet, theta + h) - 2 * k0 + kappa_real(triplet, theta - h)) / h ** 2
    except DivergentIntegral:
        return (kappa_real(triplet, theta + 2 * h) - 2 * kappa_real(triplet, theta + h)
                + k0) / h ** 2


def levy_exponent(triplet: Triplet, r: float) -> complex:
    """Φ(r) of a single particle's motion; a death sends the particle to the cemetery."""
    c4 = condition_4(triplet.measure)
    if not c4.finite:
        raise DivergentIntegral("(4)", f"∫(1∧x_1²)Λ is {c4.status}")
    ir = 1j * r

    def integrand(x: PointConfiguration) -> complex:
        x1 = x.first
        if x1 == NEG_INF:
            return -1.0 + 0j
        return cmath.exp(ir * x1) - 1.0 - ir * x1 * _small(x1)

    res = _checked(triplet.measure.integrate(integrand, complex_valued=True), "(4)", "Φ")
    return -0.5 * triplet.sigma2 * r * r + triplet.a * ir + complex(res.value)


def spine_exponent(triplet: Triplet, r: float) -> complex:
    """Φ̂(r) = κ(θ + ir) - κ(θ)."""
    if r == 0:
        return 0j
    return complex(kappa(triplet, complex(triplet.theta, r))) - kappa_real(triplet)


def spine_drift(triplet: Triplet) -> float:
    """â = a + θσ² + ∫(Σ_k x_k e^{θx_k} 1{|x_k|<1} - x_1 1{|x_1|<1}) Λ(dx)."""
    theta = triplet.theta
    _require(triplet, theta)

    def integrand(x: PointConfiguration) -> float:
        total = 0.0
        for xk, m in x.groups():
            total += m * xk * math.exp(theta * xk) * _small(xk)
        if x.first != NEG_INF:
            total -= x.first * _small(x.first)
        return total

    res = _checked(triplet.measure.integrate(integrand), "(5)", "â")
    return triplet.a + theta * triplet.sigma2 + float(res.value)


def spine_exponent_direct(triplet: Triplet, r: float) -> complex:
    """Φ̂(r) from the spine's own characteristics (σ², â, Σ_n e^{θx_n} δ_{x_n} Λ)."""
    theta = triplet.theta
    ir = 1j * r
    drift = spine_drift(triplet)

    def integrand(x: PointConfiguration) -> complex:
        total = 0j
        for xk, m in x.groups():
            total += m * math.exp(theta * xk) * (cmath.exp(ir * xk) - 1.0 - ir * xk * _small(xk))
        return total

    res = _checked(triplet.measure.integrate(integrand, complex_valued=True), "(5)", "Φ̂")
    return -0.5 * triplet.sigma2 * r * r + drift * ir + complex(res.value)


def _s_functional(theta: float, g: Any) -> Any:
    def fn(x: PointConfiguration) -> float:
        s = x.weighted_sum(theta)
        return g(s) if s > 0.0 else 0.0
    return fn


def llogl_condition(triplet: Triplet) -> IntegralResult:
    """``∫ S (log S - 1)^+ Λ(dx)``."""
    return triplet.measure.integrate(_s_functional(
        triplet.theta, lambda s: s * max(math.log(s) - 1.0, 0.0)))


def llogl_plus(triplet: Triplet) -> IntegralResult:
    """``∫ S log^+ S Λ(dx)``; agrees in finiteness with the (log S - 1)^+ form for finite Λ."""
    return triplet.measure.integrate(_s_functional(
        triplet.theta, lambda s: s * max(math.log(s), 0.0)))


def tail_integral_dichotomy(triplet: Triplet, c: float) -> IntegralResult:
    """``∫_0^∞ Λ̂(S > e^{ct} + 1) dt``, computed as ``(1/c) ∫ S ln^+(S - 1) Λ(dx)``.

    An atom with ``S > 2`` stays in the set for ``t < ln(S - 1)/c``; this is
    the Fubini form of the time integral and is independent of the
    ``(log S - 1)^+`` functional of the criterion.
    """
    if not c > 0:
        raise ValueError(f"c must be > 0, got {c}")
    res = triplet.measure.integrate(_s_functional(
        triplet.theta, lambda s: s * math.log(s - 1.0) / c if s > 2.0 else 0.0))
    return IntegralResult(res.value, res.status, f"fubini/{res.method}", res.error,
                          dict(res.evidence, c=c))


def cutoff_bias(triplet: Triplet, cutoff: float = DEFAULT_CUTOFF) -> float:
    """Variance per unit time of the motion jumps below the simulation cutoff."""
    res = triplet.measure.integrate(
        lambda x: x.first ** 2, region=MOTION_SMALL, cutoff=cutoff)
    return float(res.value) if res.finite else math.inf


@dataclass
class LpReport:
    p: float
    q: float
    kappa_ptheta: float
    p_kappa_theta: float
    clause_moment: bool
    cond3: IntegralResult
    kappa_qtheta: Optional[float]
    clause_q: bool
    q_scan: Dict[str, Optional[float]] = field(default_factory=dict)
    band_mass: Optional[IntegralResult] = None
    verdict: str = UNDETERMINED_VERDICT

    @property
    def bounded(self) -> bool:
        return self.verdict == "Lp-bounded"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "p": self.p,
            "q": self.q,
            "kappa_ptheta": self.kappa_ptheta,
            "p_kappa_theta": self.p_kappa_theta,
            "clause_moment": self.clause_moment,
            "cond3": self.cond3.to_dict(),
            "kappa_qtheta": self.kappa_qtheta,
            "clause_q": self.clause_q,
            "q_scan": dict(self.q_scan),
            "band_mass": self.band_mass.to_dict() if self.band_mass else None,
            "verdict": self.verdict,
        }


@dataclass
class CriterionReport:
    theta: float
    admissible_4: IntegralResult
    admissible_5: IntegralResult
    kappa_theta: float
    kappa_prime_theta: float
    margin: float
    cond1: bool
    boundary: bool
    cond2: IntegralResult
    verdict: str
    llogl_plus: Optional[IntegralResult] = None
    tail_integral: Optional[IntegralResult] = None
    kappa_second: Optional[float] = None
    kappa_zero: Optional[float] = None
    skeleton: Dict[str, Any] = field(default_factory=dict)
    fd_gap: Optional[float] = None
    lp: Optional[LpReport] = None

    @property
    def supercritical(self) -> Optional[bool]:
        return None if self.kappa_zero is None else self.kappa_zero > 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "theta": self.theta,
            "admissible_4": self.admissible_4.to_dict(),
            "admissible_5": self.admissible_5.to_dict(),
            "kappa_theta": self.kappa_theta,
            "kappa_prime_theta": self.kappa_prime_theta,
            "kappa_prime_fd_gap": self.fd_gap,
            "kappa_second": self.kappa_second,
            "cond1": {"holds": self.cond1, "margin": self.margin, "boundary": self.boundary},
            "cond2": self.cond2.to_dict(),
            "llogl_plus": self.llogl_plus.to_dict() if self.llogl_plus else None,
            "tail_integral": self.tail_integral.to_dict() if self.tail_integral else None,
            "kappa_zero": self.kappa_zero,
            "supercritical": self.supercritical,
            "skeleton": dict(self.skeleton),
            "verdict": self.verdict,
            "lp": self.lp.to_dict() if self.lp else None,
        }


def _verdict(cond1: bool, cond2: IntegralResult) -> str:
    if not cond1 or cond2.divergent:
        return DEGENERATE
    if cond2.status == UNDETERMINED:
        return UNDETERMINED_VERDICT
    return UI


def _skeleton(theta: float, k: float, kp: float) -> Dict[str, Any]:
    m = math.exp(k)
    mp = kp * m
    return {
        "m_theta": m,
        "m_prime_theta": mp,
        "holds": theta * mp / m < math.log(m),
    }


def check_criterion(triplet: Triplet) -> CriterionReport:
    """Decide uniform integrability of the additive martingale."""
    theta = triplet.theta
    c4 = condition_4(triplet.measure)
    c5 = condition_5(triplet.measure, theta)
    _require(triplet, theta)
    k = kappa_real(triplet)
    kp = kappa_prime(triplet)
    margin = theta * kp - k
    cond1 = margin < 0
    k2: Optional[float]
    try:
        k2 = kappa_second(triplet)
    except DivergentIntegral:
        k2 = None
    boundary = abs(margin) < BOUNDARY_MARGIN
    if not boundary and k2 is not None and theta * k2 != 0.0:
        boundary = abs(margin) / abs(theta * k2) < BOUNDARY_THETA
    cond2 = llogl_condition(triplet)
    try:
        k0: Optional[float] = kappa_real(triplet, 0.0)
    except DivergentIntegral:
        k0 = math.inf
    report = CriterionReport(
        theta=theta,
        admissible_4=c4,
        admissible_5=c5,
        kappa_theta=k,
        kappa_prime_theta=kp,
        margin=margin,
        cond1=cond1,
        boundary=boundary,
        cond2=cond2,
        verdict=_verdict(cond1, cond2),
        llogl_plus=llogl_plus(triplet),
        tail_integral=tail_integral_dichotomy(triplet, 1.0),
        kappa_second=k2,
        kappa_zero=k0,
        skeleton=_skeleton(theta, k, kp),
        fd_gap=kappa_prime_discrepancy(triplet, kp),
    )
    logger.info("theta=%g kappa=%.12g kappa'=%.12g margin=%.3e cond2=%s -> %s%s",
                theta, k, kp, margin, cond2.status, report.verdict,
                " (boundary)" if boundary else "")
    return report


def _kappa_or_none(triplet: Triplet, z: float) -> Optional[float]:
    try:
        return kappa_real(triplet, z)
    except DivergentIntegral:
        return None


def check_lp(triplet: Triplet, p: float, q: float, scan_q: bool = False) -> LpReport:
    """Sufficient condition for boundedness of W in L^p, ``p ∈ (1, 2]``."""
    if not 1.0 < p <= 2.0:
        raise ValueError(f"p must lie in (1, 2], got {p}")
    if not q > p:
        raise ValueError(f"q must be > p, got q={q}, p={p}")
    theta = triplet.theta
    k = kappa_real(triplet)
    kp_theta = _kappa_or_none(triplet, p * theta)
    clause_moment = kp_theta is not None and kp_theta < p * k
    cond3 = triplet.measure.integrate(_s_functional(
        theta, lambda s: s ** p if s > 2.0 else 0.0))
    kq = _kappa_or_none(triplet, q * theta)
    q_scan: Dict[str, Optional[float]] = {}
    if scan_q:
        for qq in (p + 0.1, p + 0.5, 2 * p):
            q_scan[repr(qq)] = _kappa_or_none(triplet, qq * theta)
    band = triplet.measure.integrate(_s_functional(
        theta, lambda s: 1.0 if 0.5 <= s <= 2.0 else 0.0))
    clause_q = kq is not None or any(v is not None for v in q_scan.values())
    if clause_moment and cond3.finite and clause_q:
        verdict = "Lp-bounded"
    elif cond3.status == UNDETERMINED and clause_moment and clause_q:
        verdict = UNDETERMINED_VERDICT
    else:
        verdict = "not certified"
    return LpReport(
        p=p, q=q,
        kappa_ptheta=kp_theta if kp_theta is not None else math.inf,
        p_kappa_theta=p * k,
        clause_moment=clause_moment,
        cond3=cond3,
        kappa_qtheta=kq,
        clause_q=clause_q,
        q_scan=q_scan,
        band_mass=band,
        verdict=verdict,
    )

