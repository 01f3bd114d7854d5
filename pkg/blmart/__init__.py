"""blmart - uniform integrability of additive martingales in branching Lévy processes."""

__version__ = "0.1.0"

from blmart.cumulant import DivergentIntegral, Triplet, check_criterion, check_lp  # noqa: E402
from blmart.measure import MeasureError  # noqa: E402
from blmart.scenario import ScenarioError, load_builtin, parse_scenario  # noqa: E402

__all__ = [
    "DivergentIntegral",
    "MeasureError",
    "ScenarioError",
    "Triplet",
    "check_criterion",
    "check_lp",
    "load_builtin",
    "parse_scenario",
]
