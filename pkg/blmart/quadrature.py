"""Adaptive quadrature with divergence detection, and tabulated inverse-CDF sampling.

Integrals over a bounded interval go straight to ``scipy.integrate.quad``.
Integrals over a half line are taken in geometrically growing chunks; once the
integrand decays exponentially the remaining tail is closed analytically, and an
integrand that stops decaying is reported as divergent. Quadrature alone can
never prove divergence, so the verdicts here are evidence; series tails are
classified by comparison instead (see ``measure.CountableDiscrete``).
"""

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate

logger = logging.getLogger(__name__)

Number = Union[float, complex]

FINITE = "finite"
DIVERGENT = "divergent"
UNDETERMINED = "undetermined"

EPSABS = 1e-12
EPSREL = 1e-12
LIMIT = 200
TAIL_TOL = 1e-13
MIN_DECAY = 1e-6
DEFAULT_SPAN = 512.0


@dataclass(frozen=True)
class IntegralResult:
    """Value of an integral together with how far it can be trusted."""

    value: Number
    status: str = FINITE
    method: str = "exact-sum"
    error: float = 0.0
    evidence: Dict[str, float] = field(default_factory=dict)

    @property
    def finite(self) -> bool:
        return self.status == FINITE

    @property
    def divergent(self) -> bool:
        return self.status == DIVERGENT

    def scaled(self, factor: float) -> "IntegralResult":
        return IntegralResult(self.value * factor, self.status, self.method,
                              self.error * abs(factor), dict(self.evidence))

    def to_dict(self) -> dict:
        value = self.value
        out: dict = {"status": self.status, "method": self.method, "error": self.error}
        if isinstance(value, complex):
            out["value"] = [value.real, value.imag]
        else:
            out["value"] = value
        if self.evidence:
            out["evidence"] = dict(self.evidence)
        return out


def fsum_number(values: Sequence[Number]) -> Number:
    """Exactly rounded sum of real or complex values."""
    if any(isinstance(v, complex) for v in values):
        return complex(math.fsum(complex(v).real for v in values),
                       math.fsum(complex(v).imag for v in values))
    return math.fsum(values)  # type: ignore[arg-type]


def combine(results: Sequence[IntegralResult], method: Optional[str] = None) -> IntegralResult:
    """Sum several partial integrals; the worst status wins."""
    if not results:
        return IntegralResult(0.0)
    statuses = {r.status for r in results}
    if DIVERGENT in statuses:
        status = DIVERGENT
    elif UNDETERMINED in statuses:
        status = UNDETERMINED
    else:
        status = FINITE
    evidence: Dict[str, float] = {}
    for r in results:
        evidence.update(r.evidence)
    return IntegralResult(
        value=fsum_number([r.value for r in results]),
        status=status,
        method=method or "+".join(sorted({r.method for r in results})),
        error=math.fsum(r.error for r in results),
        evidence=evidence,
    )


def _is_finite(value: Number) -> bool:
    if isinstance(value, complex):
        return math.isfinite(value.real) and math.isfinite(value.imag)
    return math.isfinite(value)


def _quad_real(f: Callable[[float], float], a: float, b: float,
               points: Sequence[float]) -> Tuple[float, float, bool]:
    inner = sorted(p for p in set(points) if a < p < b)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        value, err = integrate.quad(f, a, b, epsabs=EPSABS, epsrel=EPSREL, limit=LIMIT,
                                    points=inner or None)
    return value, err, bool(caught)


def integrate_interval(h: Callable[[float], Number], a: float, b: float, *,
                       points: Sequence[float] = (), complex_valued: bool = False,
                       ) -> IntegralResult:
    """Integrate ``h`` over the bounded interval ``[a, b]``, splitting at ``points``."""
    if b <= a:
        return IntegralResult(0.0, method="quad")
    try:
        re, err_re, warned = _quad_real(lambda s: complex(h(s)).real, a, b, points)
        im, err_im = 0.0, 0.0
        if complex_valued:
            im, err_im, warned_im = _quad_real(lambda s: complex(h(s)).imag, a, b, points)
            warned = warned or warned_im
    except (OverflowError, ZeroDivisionError, ValueError):
        return IntegralResult(math.inf, DIVERGENT, "quad", math.inf, {"lo": a, "hi": b})
    value: Number = complex(re, im) if complex_valued else re
    if not _is_finite(value):
        return IntegralResult(value, DIVERGENT, "quad", math.inf, {"lo": a, "hi": b})
    if warned:
        logger.debug("quad reported a convergence warning on [%g, %g]", a, b)
    return IntegralResult(value, FINITE, "quad", err_re + err_im)


def _envelope(h: Callable[[float], Number], lo: float, hi: float) -> float:
    """Largest modulus of ``h`` on a small grid of ``[lo, hi]``."""
    peak = 0.0
    for s in np.linspace(lo, hi, 9):
        y = abs(complex(h(float(s))))
        if not math.isfinite(y):
            return math.inf
        peak = max(peak, y)
    return peak


def integrate_half_line(h: Callable[[float], Number], b: float, *,
                        points: Sequence[float] = (), complex_valued: bool = False,
                        span: float = DEFAULT_SPAN) -> IntegralResult:
    """Integrate ``h`` over ``(-inf, b]``.

    The range is walked leftwards in chunks of width 1, 2, 4, ... up to ``span``.
    After each chunk the decay rate of ``|h|`` is estimated from the two innermost
    unit windows adjacent to the current left edge; with a positive rate the
    tail beyond the edge is ``h(edge) / rate``. Reaching ``span`` with a
    non-positive rate is reported as divergence.
    """
    parts: List[IntegralResult] = []
    hi = b
    width = 1.0
    floor = b - span
    # no early stop before every kink has been passed
    settle = min(min(points) - 2.0, b - 2.0) if points else b - 2.0
    while True:
        lo = max(hi - width, floor)
        part = integrate_interval(h, lo, hi, points=points, complex_valued=complex_valued)
        if not part.finite:
            return combine(parts + [part], method="quad+tail")
        parts.append(part)
        if lo > settle and lo > floor:
            hi = lo
            width *= 2.0
            continue
        total = abs(complex(fsum_number([p.value for p in parts])))
        near = _envelope(h, lo, lo + 1.0)
        far = _envelope(h, lo + 1.0, lo + 2.0)
        if not math.isfinite(near):
            return combine(parts + [IntegralResult(
                math.nan, UNDETERMINED, "quad+tail", math.inf, {"edge": lo})])
        if near == 0.0:
            return combine(parts, method="quad+tail")
        if math.isfinite(far) and far > 0.0:
            rate = math.log(far / near)
        else:
            rate = -math.inf
        if rate > MIN_DECAY:
            bound = near / rate
            if bound <= TAIL_TOL * max(1.0, total) or lo <= floor:
                tail_value: Number = complex(h(lo)) / rate
                if not complex_valued:
                    tail_value = complex(tail_value).real
                parts.append(IntegralResult(tail_value, FINITE, "tail-extrapolation", bound,
                                            {"decay_rate": rate, "edge": lo}))
                return combine(parts, method="quad+tail")
        elif lo <= floor:
            logger.debug("integrand stopped decaying at %g (rate %g)", lo, rate)
            partial = fsum_number([p.value for p in parts])
            return IntegralResult(math.inf, DIVERGENT, "quad+tail", math.inf,
                                  {"decay_rate": rate, "edge": lo,
                                   "partial": abs(complex(partial))})
        hi = lo
        width *= 2.0


class CellSampler:
    """Inverse-CDF sampler for a nonnegative weight on a bounded interval.

    The interval is split at ``edges`` (discontinuities of the weight) and then
    into equal cells. Cell masses come from 8-point Gauss-Legendre rules; within a
    cell the weight is taken linear between its end values and inverted exactly.
    """

    NODES, WEIGHTS = np.polynomial.legendre.leggauss(8)

    def __init__(self, weight: Callable[[float], float], edges: Sequence[float],
                 cells: int = 2048) -> None:
        bounds = sorted(set(float(e) for e in edges))
        if len(bounds) < 2:
            raise ValueError("sampler needs an interval with two distinct edges")
        length = bounds[-1] - bounds[0]
        lefts: List[float] = []
        rights: List[float] = []
        for a, b in zip(bounds[:-1], bounds[1:]):
            k = max(1, int(round(cells * (b - a) / length)))
            grid = np.linspace(a, b, k + 1)
            lefts.extend(grid[:-1])
            rights.extend(grid[1:])
        self.left = np.asarray(lefts)
        self.right = np.asarray(rights)
        half = 0.5 * (self.right - self.left)
        mid = 0.5 * (self.right + self.left)
        masses = np.zeros(len(self.left))
        for node, w in zip(self.NODES, self.WEIGHTS):
            values = np.array([weight(float(s)) for s in mid + half * node])
            masses += w * values * half
        # one-sided limits so that a breakpoint edge takes the value of its own cell
        eps = 1e-12 * np.maximum(1.0, np.abs(self.left))
        self.w_left = np.array([weight(float(s)) for s in self.left + eps])
        self.w_right = np.array([weight(float(s)) for s in self.right - eps])
        masses = np.clip(masses, 0.0, None)
        self.cumulative = np.cumsum(masses)
        self.total = float(self.cumulative[-1]) if len(self.cumulative) else 0.0

    def draw(self, rng: np.random.Generator) -> float:
        if self.total <= 0.0:
            raise ValueError("sampler has zero total mass")
        idx = int(np.searchsorted(self.cumulative, rng.random() * self.total, side="right"))
        idx = min(idx, len(self.cumulative) - 1)
        a, b = float(self.w_left[idx]), float(self.w_right[idx])
        frac = _invert_trapezoid(max(a, 0.0), max(b, 0.0), rng.random())
        return float(self.left[idx] + frac * (self.right[idx] - self.left[idx]))


def _invert_trapezoid(a: float, b: float, v: float) -> float:
    """Solve ``a x + (b - a) x^2 / 2 = v (a + b) / 2`` for ``x`` in [0, 1]."""
    if a + b <= 0.0:
        return v
    slope = b - a
    target = v * 0.5 * (a + b)
    if abs(slope) < 1e-12 * max(a, b):
        return target / a if a > 0.0 else v
    disc = a * a + 2.0 * slope * target
    x = (-a + math.sqrt(max(disc, 0.0))) / slope
    return min(max(x, 0.0), 1.0)
