"""Built-in branching Lévy measures and their admissibility rules.

Formulas are small callable classes rather than closures so that measures
pickle cleanly into worker processes.
"""

import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Mapping

from .measure import (
    NEG_INF,
    BranchingLevyMeasure,
    CountableDiscrete,
    FiniteDiscrete,
    Fragmentation,
    PointConfiguration,
)

FAMILIES = ("yule", "finite", "heavy_offspring", "fragmentation", "single_jump", "zero")


def yule(rate: float = 1.0) -> FiniteDiscrete:
    """Binary splitting at rate ``rate``: atom ``(0, 0)``. With σ² > 0 this is BBM."""
    return FiniteDiscrete([(rate, PointConfiguration((0.0, 0.0)))], family="yule")


def bbm(beta: float = 1.0) -> FiniteDiscrete:
    return yule(beta)


def single_jump(size: float = math.log(2.0), rate: float = 1.0) -> FiniteDiscrete:
    """The parent jumps by ``size`` at rate ``rate``; nobody is born."""
    return FiniteDiscrete([(rate, PointConfiguration((size, NEG_INF)))], family="single_jump")


def pure_drift() -> FiniteDiscrete:
    """Λ = 0."""
    return FiniteDiscrete([], family="zero")


def finite(atoms: List[List[Any]]) -> FiniteDiscrete:
    """Atoms given as ``[rate, [x_1, x_2, ...]]``; entries are ranked on construction."""
    return FiniteDiscrete([(float(rate), PointConfiguration.ranked([float(v) for v in values]))
                           for rate, values in atoms])


@dataclass(frozen=True)
class HeavyRates:
    """``λ_m = scale · m^{-2} (ln m)^{-2}``."""

    scale: float = 1.0

    def __call__(self, m: float) -> float:
        return self.scale / (m * m * math.log(m) ** 2)


@dataclass(frozen=True)
class UniformZeros:
    """``m`` particles at the origin."""

    def __call__(self, m: float) -> PointConfiguration:
        return PointConfiguration.uniform(0.0, m)


def heavy_offspring(scale: float = 1.0) -> CountableDiscrete:
    """For ``m ≥ 3``, ``m`` copies of 0 at rate ``λ_m``.

    ``Σ λ_m (m-1)`` converges while ``Σ λ_m m ln m`` diverges, so the
    exponential moment condition holds and the L log L condition fails.
    """
    return CountableDiscrete(HeavyRates(scale), UniformZeros(), start=3, family="heavy_offspring")


@dataclass(frozen=True)
class PowerDensity:
    """``rate · v^{-1-α}`` with ``v = 1 - u``."""

    alpha: float
    rate: float = 1.0

    def __call__(self, v: float) -> float:
        return self.rate * v ** (-1.0 - self.alpha)


@dataclass(frozen=True)
class BinarySplit:
    """A fragment of size 1 splits into ``u`` and ``1 - u``: configuration ``(ln u, ln(1-u))``."""

    def __call__(self, v: float) -> PointConfiguration:
        return PointConfiguration.ranked((math.log1p(-v), math.log(v)))


def binary_fragmentation(alpha: float = 0.5, rate: float = 1.0) -> Fragmentation:
    """Dislocation density ``rate (1-u)^{-1-α}`` on ``u ∈ [1/2, 1)``."""
    return Fragmentation(PowerDensity(alpha, rate), BinarySplit(), width=0.5,
                         family="fragmentation")


def _num(params: Mapping[str, Any], key: str, default: float) -> float:
    return float(params.get(key, default))


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


BUILDERS: Dict[str, Callable[[Mapping[str, Any]], BranchingLevyMeasure]] = {
    "yule": lambda p: yule(_num(p, "rate", 1.0)),
    "finite": lambda p: finite(list(p.get("atoms", []))),
    "heavy_offspring": lambda p: heavy_offspring(_num(p, "scale", 1.0)),
    "fragmentation": lambda p: binary_fragmentation(_num(p, "alpha", 0.5), _num(p, "rate", 1.0)),
    "single_jump": lambda p: single_jump(_num(p, "size", math.log(2.0)), _num(p, "rate", 1.0)),
    "zero": lambda p: pure_drift(),
}


def build(family: str, params: Mapping[str, Any]) -> BranchingLevyMeasure:
    if family not in BUILDERS:
        raise KeyError(f"unknown measure family {family!r}")
    return BUILDERS[family](params)


def family_errors(family: str, params: Mapping[str, Any], theta: float) -> List[str]:
    """Admissibility rules that can be decided from the parameters alone."""
    errors: List[str] = []
    if family not in BUILDERS:
        return [f"unknown measure family {family!r} (known: {', '.join(FAMILIES)})"]
    for key in ("rate", "scale", "alpha", "size"):
        if key in params and not _is_number(params[key]):
            errors.append(f"{family}: {key} must be a number, got {params[key]!r}")
    if errors:
        return errors
    for key in ("rate", "scale"):
        if key in params and not float(params[key]) > 0:
            errors.append(f"{family}: {key} must be > 0, got {params[key]}")
    if family == "fragmentation":
        alpha = _num(params, "alpha", 0.5)
        if alpha < 0:
            errors.append(f"fragmentation: alpha must be >= 0, got {alpha}")
        if alpha >= 2:
            errors.append(f"fragmentation: alpha={alpha} >= 2, so (4) fails")
        if theta <= alpha:
            errors.append(f"fragmentation: theta={theta} <= alpha={alpha}, so (5) fails")
    if family == "finite":
        atoms = params.get("atoms", [])
        if not isinstance(atoms, (list, tuple)):
            return errors + [f"finite: atoms must be a list, got {atoms!r}"]
        for i, atom in enumerate(atoms):
            if not isinstance(atom, (list, tuple)) or len(atom) != 2 \
                    or not _is_number(atom[0]) or not isinstance(atom[1], (list, tuple)) \
                    or not all(_is_number(v) for v in atom[1]):
                errors.append(f"finite: atom {i} must be [rate, [x_1, ...]]")
                continue
            if not float(atom[0]) > 0:
                errors.append(f"finite: atom {i} has rate {atom[0]}; rates must be > 0")
    return errors
