"""Branching Lévy measures, the censoring map, size-biasing and sampling.

A branching Lévy measure is an intensity on ranked point configurations: an
atom ``x = (x_1, x_2, ...)`` at rate ``λ`` means that, at rate ``λ``, a particle
jumps by ``x_1`` (dies if ``x_1 = -inf``) and begets children at offsets
``x_2, x_3, ...``. Three variants are supported:

- ``FiniteDiscrete``: a finite list of (rate, configuration) atoms; everything
  is an exact sum.
- ``CountableDiscrete``: atoms indexed by ``m = start, start+1, ...`` given by a
  rate formula and a configuration formula. A head of the series is summed
  exactly; the tail is classified from the fitted power-log decay of its
  summand and, when convergent, integrated in a log or log-log variable.
- ``Fragmentation``: configurations parametrized by the distance ``v`` to the
  singular end of a dislocation density, integrated in ``s = ln v`` by
  adaptive quadrature split at the kinks of the integrand.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from .quadrature import (
    DIVERGENT,
    FINITE,
    UNDETERMINED,
    CellSampler,
    IntegralResult,
    Number,
    combine,
    fsum_number,
    integrate_half_line,
)

logger = logging.getLogger(__name__)

NEG_INF = -math.inf

# regions of configuration space
ALL = "all"
BRANCH = "branch"
MOTION = "motion"
MOTION_LARGE = "motion_large"
MOTION_SMALL = "motion_small"
SIMULATED = "simulated"
REGIONS = (ALL, BRANCH, MOTION, MOTION_LARGE, MOTION_SMALL, SIMULATED)

DEFAULT_CUTOFF = 1e-3


class MeasureError(ValueError):
    """Raised for invalid point configurations or measures."""


class NoBranchingEvents(MeasureError):
    """Raised when a sampler is requested for a region of zero total rate."""


class TruncationError(ValueError):
    """Raised when a sampling region has infinite rate; truncate further."""


def exp_weight(theta: float, x: float) -> float:
    """``e^{θx}`` with ``e^{θ·(-inf)} = 0`` for every θ, including 0."""
    if x == NEG_INF:
        return 0.0
    return math.exp(theta * x)


@dataclass(frozen=True)
class PointConfiguration:
    """Ranked displacements, optionally grouped as (value, multiplicity) pairs.

    ``entries`` is non-increasing; ``multiplicities[i]`` copies of ``entries[i]``
    are present (one each when omitted). Entries beyond the list are ``-inf``.
    Grouping lets configurations with very many equal particles, such as the
    heavy-offspring atoms, be evaluated without expanding them.
    """

    entries: Tuple[float, ...]
    multiplicities: Tuple[float, ...] = ()

    def __post_init__(self) -> None:
        entries = tuple(float(x) for x in self.entries)
        object.__setattr__(self, "entries", entries)
        if not entries:
            raise MeasureError("a point configuration needs at least one entry")
        mult = tuple(float(m) for m in self.multiplicities) or (1.0,) * len(entries)
        object.__setattr__(self, "multiplicities", mult)
        if len(mult) != len(entries):
            raise MeasureError("entries and multiplicities differ in length")
        for x in entries:
            if math.isnan(x) or x == math.inf:
                raise MeasureError(f"invalid displacement {x!r}")
        for m in mult:
            if not m >= 1.0:
                raise MeasureError(f"multiplicity must be >= 1, got {m!r}")
        for prev, cur in zip(entries, entries[1:]):
            if cur > prev:
                raise MeasureError(f"entries must be non-increasing: {entries}")

    @classmethod
    def ranked(cls, values: Sequence[float]) -> "PointConfiguration":
        """Sort ``values`` into non-increasing order; equal values keep their order."""
        return cls(tuple(sorted((float(v) for v in values), reverse=True)))

    @classmethod
    def uniform(cls, value: float, count: float) -> "PointConfiguration":
        return cls((float(value),), (float(count),))

    @property
    def first(self) -> float:
        return self.entries[0]

    def groups(self) -> Iterator[Tuple[float, float]]:
        """(value, multiplicity) pairs of finite entries."""
        for x, m in zip(self.entries, self.multiplicities):
            if x != NEG_INF:
                yield x, m

    def children(self) -> Iterator[Tuple[float, float]]:
        """(value, multiplicity) pairs for particles 2, 3, ... that exist."""
        for i, (x, m) in enumerate(zip(self.entries, self.multiplicities)):
            if x == NEG_INF:
                continue
            m = m - 1.0 if i == 0 else m
            if m > 0.0:
                yield x, m

    @property
    def size(self) -> float:
        return math.fsum(m for _, m in self.groups())

    @property
    def has_children(self) -> bool:
        return any(True for _ in self.children())

    @property
    def is_branching(self) -> bool:
        """Death or birth, i.e. ``x_1 = -inf`` or ``x_2 > -inf``."""
        return self.first == NEG_INF or self.has_children

    @property
    def is_forbidden(self) -> bool:
        """The configuration ``(0, -inf, -inf, ...)``, which is not an event at all."""
        return self.first == 0.0 and not self.has_children

    def weighted_sum(self, theta: float) -> float:
        return math.fsum(m * exp_weight(theta, x) for x, m in self.groups())

    def split_sum(self, first: Callable[[float], Number],
                  rest: Callable[[float], Number]) -> Number:
        """``first(x_1) + Σ_{k≥2} rest(x_k)``; ``rest`` is never called on ``-inf``."""
        terms: List[Number] = [first(self.first)]
        terms.extend(m * rest(x) for x, m in self.children())
        return fsum_number(terms)

    def censor(self, n: float) -> "PointConfiguration":
        """Image under π_n: entries below ``-n`` become ``-inf``."""
        entries = tuple(NEG_INF if x < -n else x for x in self.entries)
        return PointConfiguration(entries, self.multiplicities)

    def expand(self, limit: int) -> List[float]:
        """Finite particles as a flat list; refuses more than ``limit`` particles."""
        out: List[float] = []
        for x, m in self.groups():
            k = int(round(m))
            if len(out) + k > limit:
                raise OverflowError(f"configuration has more than {limit} particles")
            out.extend([x] * k)
        return out

    def to_list(self) -> List[Any]:
        if all(m == 1.0 for m in self.multiplicities):
            return [_encode(x) for x in self.entries]
        return [[_encode(x), m] for x, m in zip(self.entries, self.multiplicities)]


def _encode(x: float) -> Any:
    return "-inf" if x == NEG_INF else x


def weighted_sum(config: PointConfiguration, theta: float) -> float:
    """``⟨x, e_θ⟩ = Σ_k e^{θ x_k}``, with ``-inf`` entries contributing 0."""
    if theta < 0:
        raise MeasureError(f"theta must be >= 0, got {theta}")
    return config.weighted_sum(theta)


def in_region(config: PointConfiguration, region: str, cutoff: float = DEFAULT_CUTOFF) -> bool:
    if region == ALL:
        return True
    branch = config.is_branching
    if region == BRANCH:
        return branch
    if region == SIMULATED:
        return branch or abs(config.first) >= cutoff
    if branch:
        return False
    if region == MOTION:
        return True
    if region == MOTION_LARGE:
        return abs(config.first) >= cutoff
    if region == MOTION_SMALL:
        return abs(config.first) < cutoff
    raise MeasureError(f"unknown region {region!r}")


@dataclass
class AtomSampler:
    """Draws configurations with probability proportional to the sampled weight."""

    rate: float
    draw: Callable[[np.random.Generator], PointConfiguration]


Functional = Callable[[PointConfiguration], Number]


class BranchingLevyMeasure(ABC):
    """Common surface of the three measure variants."""

    truncation: Optional[float] = None
    family: str = "custom"

    def __init__(self) -> None:
        self._samplers: Dict[Tuple[Any, ...], AtomSampler] = {}
        self._truncations: Dict[float, "BranchingLevyMeasure"] = {}

    def __getstate__(self) -> dict:
        state = dict(self.__dict__)
        state["_samplers"] = {}
        state["_truncations"] = {}
        return state

    def retained(self, config: PointConfiguration) -> Optional[PointConfiguration]:
        """Apply the recorded truncation; ``None`` when the atom is dropped."""
        if self.truncation is not None:
            config = config.censor(self.truncation)
        return None if config.is_forbidden else config

    @abstractmethod
    def integrate(self, fn: Functional, region: str = ALL, cutoff: float = DEFAULT_CUTOFF,
                  complex_valued: bool = False) -> IntegralResult:
        """``∫ fn(x) 1{x in region} Λ(dx)``."""

    @abstractmethod
    def _build_sampler(self, theta: Optional[float], region: str,
                       cutoff: float) -> AtomSampler:
        ...

    @abstractmethod
    def _truncate(self, n: float) -> "BranchingLevyMeasure":
        ...

    def truncate(self, n: float) -> "BranchingLevyMeasure":
        """Image under π_n; one instance per level, so its samplers are built once."""
        key = float(n)
        if key not in self._truncations:
            self._truncations[key] = self._truncate(key)
        return self._truncations[key]

    def describe(self) -> Dict[str, Any]:
        return {"family": self.family, "truncation": self.truncation}

    def sampler(self, theta: Optional[float] = None, region: str = SIMULATED,
                cutoff: float = DEFAULT_CUTOFF) -> AtomSampler:
        """Sampler for ``Λ`` (or ``⟨x,e_θ⟩Λ`` when ``theta`` is given) on ``region``."""
        key = (theta, region, cutoff)
        if key not in self._samplers:
            self._samplers[key] = self._build_sampler(theta, region, cutoff)
        return self._samplers[key]

    def _weight(self, theta: Optional[float]) -> Callable[[PointConfiguration], float]:
        if theta is None:
            return lambda x: 1.0
        return lambda x: x.weighted_sum(theta)


class FiniteDiscrete(BranchingLevyMeasure):
    """Finitely many atoms; every integral is an exactly rounded sum."""

    family = "finite"

    def __init__(self, atoms: Sequence[Tuple[float, PointConfiguration]],
                 truncation: Optional[float] = None, family: str = "finite") -> None:
        super().__init__()
        self.family = family
        self.truncation = truncation
        checked: List[Tuple[float, PointConfiguration]] = []
        for rate, config in atoms:
            rate = float(rate)
            if not (rate > 0.0 and math.isfinite(rate)):
                raise MeasureError(f"atom rate must be positive and finite, got {rate!r}")
            if config.is_forbidden:
                raise MeasureError("the configuration (0, -inf, ...) cannot carry mass")
            checked.append((rate, config))
        self.atoms: Tuple[Tuple[float, PointConfiguration], ...] = tuple(checked)

    def __repr__(self) -> str:
        return f"FiniteDiscrete({len(self.atoms)} atoms, truncation={self.truncation})"

    def integrate(self, fn: Functional, region: str = ALL, cutoff: float = DEFAULT_CUTOFF,
                  complex_valued: bool = False) -> IntegralResult:
        terms: List[Number] = []
        for rate, config in self.atoms:
            if in_region(config, region, cutoff):
                terms.append(rate * fn(config))
        value = fsum_number(terms) if terms else 0.0
        if isinstance(value, complex) and not complex_valued:
            value = value.real
        bad = not math.isfinite(abs(complex(value)))
        return IntegralResult(value, DIVERGENT if bad else FINITE, "exact-sum",
                              math.inf if bad else 0.0)

    def _build_sampler(self, theta: Optional[float], region: str,
                       cutoff: float) -> AtomSampler:
        weight = self._weight(theta)
        configs: List[PointConfiguration] = []
        rates: List[float] = []
        for rate, config in self.atoms:
            if in_region(config, region, cutoff):
                w = rate * weight(config)
                if w > 0.0:
                    configs.append(config)
                    rates.append(w)
        total = math.fsum(rates)
        cumulative = np.cumsum(rates)

        def draw(rng: np.random.Generator) -> PointConfiguration:
            idx = int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"))
            return configs[min(idx, len(configs) - 1)]

        return AtomSampler(total, draw)

    def _truncate(self, n: float) -> "FiniteDiscrete":
        atoms = []
        for rate, config in self.atoms:
            image = config.censor(n)
            if not image.is_forbidden:
                atoms.append((rate, image))
        return FiniteDiscrete(atoms, truncation=n, family=self.family)

    def describe(self) -> Dict[str, Any]:
        out = super().describe()
        out["atoms"] = [[rate, config.to_list()] for rate, config in self.atoms]
        return out


def _fit_power_log(summand: Callable[[float], float],
                   samples: Sequence[float] = (1e4, 1e8, 1e16)) -> Optional[Tuple[float, float]]:
    """Fit ``summand(m) ~ C m^E (ln m)^L`` from three sample points; ``None`` if it vanishes."""
    logs = []
    for m in samples:
        y = abs(summand(m))
        if y == 0.0:
            return None
        if not math.isfinite(y):
            return (math.inf, 0.0)
        logs.append(math.log(y))
    design = np.array([[1.0, math.log(m), math.log(math.log(m))] for m in samples])
    _, e, l = np.linalg.solve(design, np.array(logs))
    return _snap(float(e)), _snap(float(l))


def _snap(v: float, tol: float = 0.08) -> float:
    half = round(2.0 * v) / 2.0
    return half if abs(v - half) < tol else v


class CountableDiscrete(BranchingLevyMeasure):
    """Atoms ``m = start, start+1, ...`` with ``rate_formula(m)`` and ``config_formula(m)``.

    Both formulas must accept real ``m`` so that the tail can be integrated.
    Series tails beyond ``head`` are classified by their power-log decay
    ``m^E (ln m)^L``: convergent iff ``E < -1`` or ``E = -1, L < -1``.
    """

    family = "countable"
    HEAD = 4000
    SAMPLE_HEAD = 20000
    X_CAP = 1e150

    def __init__(self, rate_formula: Callable[[float], float],
                 config_formula: Callable[[float], PointConfiguration], start: int = 1,
                 truncation: Optional[float] = None, family: str = "countable") -> None:
        super().__init__()
        self.rate_formula = rate_formula
        self.config_formula = config_formula
        self.start = int(start)
        self.truncation = truncation
        self.family = family
        self._head: Optional[List[Tuple[float, Optional[PointConfiguration]]]] = None

    def __repr__(self) -> str:
        return f"CountableDiscrete({self.family}, start={self.start}, truncation={self.truncation})"

    def atom(self, m: float) -> Tuple[float, Optional[PointConfiguration]]:
        return self.rate_formula(m), self.retained(self.config_formula(m))

    def _head_atoms(self) -> List[Tuple[float, Optional[PointConfiguration]]]:
        if self._head is None:
            self._head = [self.atom(m) for m in range(self.start, self.HEAD)]
        return self._head

    def _summand(self, fn: Functional, region: str, cutoff: float) -> Callable[[float], Number]:
        def summand(m: float) -> Number:
            rate, config = self.atom(m)
            if config is None or rate == 0.0 or not in_region(config, region, cutoff):
                return 0.0
            return rate * fn(config)
        return summand

    def integrate(self, fn: Functional, region: str = ALL, cutoff: float = DEFAULT_CUTOFF,
                  complex_valued: bool = False) -> IntegralResult:
        terms: List[Number] = []
        for rate, config in self._head_atoms():
            if config is not None and in_region(config, region, cutoff):
                terms.append(rate * fn(config))
        head = IntegralResult(fsum_number(terms) if terms else 0.0, method="series-head")
        summand = self._summand(fn, region, cutoff)
        tail = self._tail(summand, self.HEAD, complex_valued)
        result = combine([head, tail], method=f"series+{tail.method}")
        if not complex_valued and isinstance(result.value, complex):
            result = IntegralResult(result.value.real, result.status, result.method,
                                    result.error, result.evidence)
        return result

    def _tail(self, summand: Callable[[float], Number], lower: int,
              complex_valued: bool) -> IntegralResult:
        fit = _fit_power_log(lambda m: abs(complex(summand(m))))
        if fit is None:
            return IntegralResult(0.0, FINITE, "vanishing-tail")
        e, l = fit
        evidence = {"tail_power": e, "tail_log_power": l}
        if e > -1.0 or (e == -1.0 and l >= -1.0):
            logger.debug("series tail m^%g (ln m)^%g diverges", e, l)
            return IntegralResult(math.inf, DIVERGENT, "series-comparison", math.inf, evidence)
        if -1.0 - 1e-9 < e < -1.0 + 1e-9 and e != -1.0:
            return IntegralResult(math.nan, UNDETERMINED, "series-comparison", math.inf,
                                  evidence)
        x0 = lower - 0.5
        if e < -1.0:
            # y = ln x, dx = x dy
            def h(s: float) -> Number:
                x = math.exp(-s)
                return summand(x) * x
            b, span = -math.log(x0), math.log(self.X_CAP) - math.log(x0)
        else:
            # w = ln ln x, dx = x ln x dw
            def h(s: float) -> Number:
                lx = math.exp(-s)
                x = math.exp(lx)
                return summand(x) * x * lx
            b = -math.log(math.log(x0))
            span = math.log(math.log(self.X_CAP)) + b
        res = integrate_half_line(h, b, complex_valued=complex_valued, span=span)
        res.evidence.update(evidence)
        return IntegralResult(res.value, res.status, "series-tail-integral", res.error,
                              res.evidence)

    def _build_sampler(self, theta: Optional[float], region: str,
                       cutoff: float) -> AtomSampler:
        weight = self._weight(theta)
        head_ms: List[int] = []
        head_w: List[float] = []
        for m in range(self.start, self.SAMPLE_HEAD):
            rate, config = self.atom(m)
            if config is not None and in_region(config, region, cutoff):
                w = rate * weight(config)
                if w > 0.0:
                    head_ms.append(m)
                    head_w.append(w)
        summand = self._summand(weight, region, cutoff)
        tail = self._tail(summand, self.SAMPLE_HEAD, False)
        if tail.divergent:
            raise TruncationError(f"{self.family}: sampled rate is infinite")
        tail_mass = float(tail.value.real) if isinstance(tail.value, complex) else float(tail.value)
        cumulative = np.cumsum(head_w) if head_w else np.zeros(1)
        head_mass = float(cumulative[-1])
        total = head_mass + max(tail_mass, 0.0)

        tail_cells: Optional[CellSampler] = None
        if tail_mass > 0.0:
            lo, hi = math.log(self.SAMPLE_HEAD - 0.5), math.log(self.X_CAP)
            tail_cells = CellSampler(lambda y: float(abs(summand(math.exp(y)))) * math.exp(y),
                                     (lo, hi), cells=1024)

        def draw(rng: np.random.Generator) -> PointConfiguration:
            u = rng.random() * total
            if u < head_mass or tail_cells is None:
                idx = int(np.searchsorted(cumulative, u, side="right"))
                m = head_ms[min(idx, len(head_ms) - 1)]
            else:
                # mass beyond X_CAP is folded into the cell table
                m = max(self.SAMPLE_HEAD, int(round(math.exp(tail_cells.draw(rng)))))
            config = self.retained(self.config_formula(m))
            assert config is not None
            return config

        return AtomSampler(total, draw)

    def _truncate(self, n: float) -> "CountableDiscrete":
        return CountableDiscrete(self.rate_formula, self.config_formula, self.start,
                                 truncation=n, family=self.family)


class Fragmentation(BranchingLevyMeasure):
    """Configurations ``config_map(v)`` under the density ``density(v) dv`` on ``(0, width]``.

    ``v`` is the distance to the singular end of the dislocation density; the
    integrals are taken in ``s = ln v`` over ``(-inf, ln width]``.
    """

    family = "fragmentation"
    SCAN_DEPTH = 60.0
    SCAN_POINTS = 1200

    def __init__(self, density: Callable[[float], float],
                 config_map: Callable[[float], PointConfiguration], width: float,
                 truncation: Optional[float] = None, family: str = "fragmentation") -> None:
        super().__init__()
        if not width > 0.0:
            raise MeasureError("fragmentation parameter interval must have positive width")
        self.density = density
        self.config_map = config_map
        self.width = float(width)
        self.truncation = truncation
        self.family = family
        self._breaks: Dict[float, Tuple[float, ...]] = {}

    def __repr__(self) -> str:
        return f"Fragmentation({self.family}, truncation={self.truncation})"

    @property
    def s_max(self) -> float:
        return math.log(self.width)

    def config_at(self, s: float) -> Optional[PointConfiguration]:
        return self.retained(self.config_map(math.exp(s)))

    def mass_at(self, s: float) -> float:
        """Density of the parameter in the ``s`` variable."""
        v = math.exp(s)
        return self.density(v) * v

    def breakpoints(self, cutoff: float) -> Tuple[float, ...]:
        """Values of ``s`` where a coordinate crosses a kink level of the integrands."""
        if cutoff in self._breaks:
            return self._breaks[cutoff]
        levels = [0.0, 1.0, -1.0, cutoff, -cutoff]
        if self.truncation is not None:
            levels.append(-self.truncation)
        grid = np.linspace(self.s_max - self.SCAN_DEPTH, self.s_max, self.SCAN_POINTS)
        coords = [self.config_map(math.exp(s)).entries for s in grid]
        width = max(len(c) for c in coords)
        found = set()
        for k in range(width):
            def coord(s: float, k: int = k) -> float:
                entries = self.config_map(math.exp(s)).entries
                return entries[k] if k < len(entries) else NEG_INF
            values = [c[k] if k < len(c) else NEG_INF for c in coords]
            for level in levels:
                for i in range(len(grid) - 1):
                    a, b = values[i] - level, values[i + 1] - level
                    if not (math.isfinite(a) and math.isfinite(b)) or a * b > 0 or a == b:
                        continue
                    if a == 0.0:
                        found.add(float(grid[i]))
                        continue
                    root = optimize.brentq(lambda s: coord(s) - level, grid[i], grid[i + 1],
                                           xtol=1e-14)
                    found.add(float(root))
        self._breaks[cutoff] = tuple(sorted(found))
        return self._breaks[cutoff]

    def integrate(self, fn: Functional, region: str = ALL, cutoff: float = DEFAULT_CUTOFF,
                  complex_valued: bool = False) -> IntegralResult:
        def h(s: float) -> Number:
            config = self.config_at(s)
            if config is None or not in_region(config, region, cutoff):
                return 0.0
            return self.mass_at(s) * fn(config)

        return integrate_half_line(h, self.s_max, points=self.breakpoints(cutoff),
                                   complex_valued=complex_valued)

    def _support_floor(self, active: Callable[[float], bool], cutoff: float) -> float:
        """Left end of the active set in ``s``; raises if it reaches ``-inf``."""
        depth = self.s_max - self.SCAN_DEPTH
        if active(depth) or active(depth - 1.0):
            raise TruncationError(
                f"{self.family}: sampled region has infinite rate"
                f" (truncation={self.truncation}); truncate further")
        grid = np.linspace(depth, self.s_max, self.SCAN_POINTS)
        first = next((float(s) for s in grid if active(float(s))), None)
        if first is None:
            return self.s_max
        below = [b for b in self.breakpoints(cutoff) if b <= first]
        step = float(grid[1] - grid[0])
        return max(below) if below else first - step

    def _build_sampler(self, theta: Optional[float], region: str,
                       cutoff: float) -> AtomSampler:
        weight = self._weight(theta)

        def w(s: float) -> float:
            config = self.config_at(s)
            if config is None or not in_region(config, region, cutoff):
                return 0.0
            return self.mass_at(s) * weight(config)

        lo = self._support_floor(lambda s: w(s) > 0.0, cutoff)
        rate = self.integrate(weight, region, cutoff)
        if not rate.finite:
            raise TruncationError(f"{self.family}: sampled rate is not finite")
        if lo >= self.s_max or float(rate.value) <= 0.0:
            return AtomSampler(0.0, _empty_draw)
        edges = [lo, self.s_max] + [b for b in self.breakpoints(cutoff) if lo < b < self.s_max]
        cells = CellSampler(w, edges)

        def draw(rng: np.random.Generator) -> PointConfiguration:
            config = self.config_at(cells.draw(rng))
            assert config is not None
            return config

        return AtomSampler(float(rate.value), draw)

    def _truncate(self, n: float) -> "Fragmentation":
        return Fragmentation(self.density, self.config_map, self.width, truncation=n,
                             family=self.family)


def _empty_draw(rng: np.random.Generator) -> PointConfiguration:
    raise NoBranchingEvents("no events in the sampled region")


class TiltedMeasure:
    """``Λ̂(dx) = ⟨x, e_θ⟩ Λ(dx)``."""

    def __init__(self, base: BranchingLevyMeasure, theta: float) -> None:
        self.base = base
        self.theta = float(theta)

    def __repr__(self) -> str:
        return f"TiltedMeasure({self.base!r}, theta={self.theta})"

    def rate_multiplier(self, config: PointConfiguration) -> float:
        return config.weighted_sum(self.theta)

    def integrate(self, fn: Functional, region: str = ALL, cutoff: float = DEFAULT_CUTOFF,
                  complex_valued: bool = False) -> IntegralResult:
        theta = self.theta
        return self.base.integrate(lambda x: x.weighted_sum(theta) * fn(x), region, cutoff,
                                   complex_valued)

    def atoms(self) -> List[Tuple[float, PointConfiguration]]:
        """Tilted atoms of a finite base."""
        if not isinstance(self.base, FiniteDiscrete):
            raise MeasureError("tilted atoms are listed for finite measures only")
        return [(rate * self.rate_multiplier(config), config)
                for rate, config in self.base.atoms]

    def sampler(self, region: str = SIMULATED, cutoff: float = DEFAULT_CUTOFF) -> AtomSampler:
        return self.base.sampler(self.theta, region, cutoff)

    def truncate(self, n: float) -> "TiltedMeasure":
        return TiltedMeasure(self.base.truncate(n), self.theta)


def exponential_integrability(measure: BranchingLevyMeasure, theta: float) -> IntegralResult:
    """Integral in condition (5): ``∫(1{x_1>1} e^{θx_1} + Σ_{k≥2} e^{θx_k}) Λ(dx)``."""
    return measure.integrate(lambda x: x.split_sum(
        lambda x1: exp_weight(theta, x1) if x1 > 1.0 else 0.0,
        lambda xk: math.exp(theta * xk)))


def truncate(measure: BranchingLevyMeasure, n: float) -> BranchingLevyMeasure:
    """Image measure under π_n."""
    if not n > 0:
        raise MeasureError(f"truncation level must be > 0, got {n}")
    return measure.truncate(n)


def tilt(measure: BranchingLevyMeasure, theta: float) -> TiltedMeasure:
    """Size-bias ``measure`` by ``⟨x, e_θ⟩``; requires condition (5)."""
    if theta < 0:
        raise MeasureError(f"theta must be >= 0, got {theta}")
    check = exponential_integrability(measure, theta)
    if not check.finite:
        raise MeasureError(
            f"cannot tilt: exponential integrability (5) fails at theta={theta} ({check.status})")
    return TiltedMeasure(measure, theta)


def sample_atom(tilted: TiltedMeasure, truncation: Optional[float], rng: np.random.Generator,
                cutoff: float = DEFAULT_CUTOFF) -> Tuple[float, PointConfiguration]:
    """Waiting time and configuration of the next atom of the tilted Poisson process."""
    source = tilted.truncate(truncation) if truncation is not None else tilted
    sampler = source.sampler(SIMULATED, cutoff)
    if sampler.rate <= 0.0:
        raise NoBranchingEvents("tilted measure has zero total rate")
    return float(rng.exponential(1.0 / sampler.rate)), sampler.draw(rng)


def sample_spine_index(config: PointConfiguration, theta: float,
                       rng: np.random.Generator) -> int:
    """Particle index ``k`` (1-based) with probability ``e^{θx_k} / ⟨x, e_θ⟩``."""
    groups = list(zip(config.entries, config.multiplicities))
    weights = [m * exp_weight(theta, x) for x, m in groups]
    total = math.fsum(weights)
    if total <= 0.0:
        raise MeasureError("cannot select a spine child: every entry is -inf")
    u = rng.random() * total
    offset = 0
    acc = 0.0
    for (x, m), w in zip(groups, weights):
        count = int(round(m))
        if w > 0.0 and u < acc + w:
            return offset + 1 + min(int((u - acc) / w * count), count - 1)
        acc += w
        offset += count
    # rounding at the top end of the last positive group
    last = max(i for i, w in enumerate(weights) if w > 0.0)
    return sum(int(round(m)) for _, m in groups[:last + 1])
