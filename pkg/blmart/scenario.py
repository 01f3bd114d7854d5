"""Scenario files: one JSON document describing a model, a simulation budget and experiments.

Numeric fields may be JSON numbers, decimal strings or small expressions such
as ``"ln(2)"`` or ``"sqrt(2)/2"``. The text as written is kept, so dumping a
parsed scenario and parsing it again gives the same scenario.
"""

import ast
import copy
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from .cumulant import Triplet
from .engine import Caps
from .families import build, family_errors
from .measure import DEFAULT_CUTOFF, MeasureError

DEFAULT_HORIZON = 8.0
DEFAULT_REPLICAS = 1000
DEFAULT_SEED = 20240101
QUERY_STEPS = 8

NUMBER_NAMES = {"e": math.e, "pi": math.pi, "inf": math.inf}
NUMBER_FUNCTIONS = {"ln": math.log, "log": math.log, "exp": math.exp, "sqrt": math.sqrt}

# experiment kind -> required keys
EXPERIMENTS: Dict[str, tuple] = {
    "criterion": (),
    "martingale_mean": ("t",),
    "martingale_increment": ("t1", "t2"),
    "degeneracy": ("times",),
    "change_of_measure": ("functionals", "times"),
    "yule_limit": (),
    "lp_moment": ("p", "q", "times"),
    "spine_law": ("t",),
    "characteristic_function": (),
    "wstar_stability": (),
    "truncation_coupling": (),
    "censoring": ("n", "N", "t"),
    "survival": ("t",),
    "tilted_blowup": ("times",),
}

NUMERIC_KEYS = {"t", "t1", "t2", "times", "n", "N", "p", "q", "threshold", "tolerance",
                "levels", "rs", "moment_times", "cf_time", "floor", "level", "step"}


class ScenarioError(ValueError):
    """A scenario failed validation; ``errors`` lists every problem found."""

    def __init__(self, errors: List[str], source: str = "") -> None:
        self.errors = list(errors)
        head = f"{source}: " if source else ""
        super().__init__(head + "; ".join(self.errors))


def _eval_node(node: ast.AST) -> float:
    if isinstance(node, ast.Expression):
        return _eval_node(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        return float(node.value)
    if isinstance(node, ast.Name) and node.id in NUMBER_NAMES:
        return NUMBER_NAMES[node.id]
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.UAdd, ast.USub)):
        v = _eval_node(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp):
        left, right = _eval_node(node.left), _eval_node(node.right)
        if isinstance(node.op, ast.Add):
            return left + right
        if isinstance(node.op, ast.Sub):
            return left - right
        if isinstance(node.op, ast.Mult):
            return left * right
        if isinstance(node.op, ast.Div):
            return left / right
        if isinstance(node.op, ast.Pow):
            return float(left ** right)
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
            and node.func.id in NUMBER_FUNCTIONS and len(node.args) == 1 and not node.keywords:
        return NUMBER_FUNCTIONS[node.func.id](_eval_node(node.args[0]))
    raise ValueError(f"unsupported expression element {type(node).__name__}")


def evaluate_number(text: Union[str, int, float]) -> float:
    """Evaluate a number or a whitelisted arithmetic expression."""
    if isinstance(text, bool):
        raise ValueError(f"not a number: {text!r}")
    if isinstance(text, (int, float)):
        return float(text)
    if not isinstance(text, str):
        raise ValueError(f"not a number: {text!r}")
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as e:
        raise ValueError(f"cannot parse number {text!r}: {e.msg}") from None
    try:
        return _eval_node(tree)
    except (ArithmeticError, ValueError) as e:
        raise ValueError(f"cannot evaluate {text!r}: {e}") from None


def _numbers(value: Any) -> Any:
    """Evaluate every leaf of a nested list/number structure."""
    if isinstance(value, list):
        return [_numbers(v) for v in value]
    return evaluate_number(value)


@dataclass
class Scenario:
    name: str
    triplet: Triplet
    truncation: Optional[float]
    horizon: float
    query_times: List[float]
    caps: Caps = field(default_factory=Caps)
    replicas: int = DEFAULT_REPLICAS
    seed: int = DEFAULT_SEED
    cutoff: float = DEFAULT_CUTOFF
    expect: Dict[str, Any] = field(default_factory=dict)
    experiments: List[Dict[str, Any]] = field(default_factory=list)
    raw: Dict[str, Any] = field(default_factory=dict)

    @property
    def model(self) -> Triplet:
        """The triplet after truncation, which is what gets simulated."""
        if self.truncation is None:
            return self.triplet
        cached = self.__dict__.get("_model")
        if cached is None:
            cached = self.triplet.truncate(self.truncation)
            self.__dict__["_model"] = cached
        return cached

    def to_dict(self) -> Dict[str, Any]:
        return copy.deepcopy(self.raw)

    def dumps(self) -> str:
        return json.dumps(self.raw, indent=2, sort_keys=True) + "\n"

    def experiment(self, kind: str) -> Optional[Dict[str, Any]]:
        for entry in self.experiments:
            if entry["kind"] == kind:
                return entry
        return None


class _Collector:
    def __init__(self) -> None:
        self.errors: List[str] = []

    def number(self, doc: Dict[str, Any], key: str, default: Optional[float] = None,
               where: str = "") -> Optional[float]:
        if key not in doc or doc[key] is None:
            return default
        try:
            return evaluate_number(doc[key])
        except ValueError as e:
            self.errors.append(f"{where}{key}: {e}")
            return default

    def count(self, doc: Dict[str, Any], key: str, default: int, where: str = "") -> int:
        """A positive integer field; anything else is recorded and replaced by ``default``."""
        value = doc.get(key, default)
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if isinstance(value, bool) or not isinstance(value, int) or value < 1:
            self.errors.append(f"{where}{key} must be a positive integer, got {value!r}")
            return default
        return value


def _experiment(entry: Any, index: int, errors: List[str]) -> Optional[Dict[str, Any]]:
    where = f"experiments[{index}]"
    if not isinstance(entry, dict) or "kind" not in entry:
        errors.append(f"{where}: must be an object with a 'kind'")
        return None
    kind = entry["kind"]
    if kind not in EXPERIMENTS:
        errors.append(f"{where}: unknown experiment kind {kind!r}")
        return None
    missing = [k for k in EXPERIMENTS[kind] if k not in entry]
    if missing:
        what = " and ".join(missing)
        errors.append(f"{where}: {kind} experiment is missing {what}")
        return None
    parsed: Dict[str, Any] = {}
    for key, value in entry.items():
        if key in NUMERIC_KEYS and value is not None:
            try:
                parsed[key] = _numbers(value)
            except ValueError as e:
                errors.append(f"{where}.{key}: {e}")
        elif key == "replicas" and value is not None:
            if not isinstance(value, int) or value < 1:
                errors.append(f"{where}.replicas must be a positive integer, got {value!r}")
            parsed[key] = value
        else:
            parsed[key] = value
    if kind == "lp_moment" and "p" in parsed and not 1.0 < parsed["p"] <= 2.0:
        errors.append(f"{where}: p must lie in (1, 2], got {parsed['p']}")
    if kind == "lp_moment" and "p" in parsed and "q" in parsed and not parsed["q"] > parsed["p"]:
        errors.append(f"{where}: q must be > p")
    return parsed


def scenario_from_dict(doc: Dict[str, Any], source: str = "",
                       caps: Optional[Caps] = None,
                       cutoff: Optional[float] = None) -> Scenario:
    """Validate ``doc`` and build a Scenario; collects all errors before raising.

    ``caps`` and ``cutoff`` are defaults for documents that do not set them.
    """
    if not isinstance(doc, dict):
        raise ScenarioError(["scenario must be a JSON object"], source)
    col = _Collector()
    raw = copy.deepcopy(doc)
    name = str(doc.get("name") or Path(source).stem or "scenario")
    raw["name"] = name

    tdoc = doc.get("triplet")
    if not isinstance(tdoc, dict):
        col.errors.append("triplet: missing or not an object")
        tdoc = {}
    sigma2 = col.number(tdoc, "sigma2", 0.0, "triplet.")
    a = col.number(tdoc, "a", 0.0, "triplet.")
    theta = col.number(tdoc, "theta", None, "triplet.")
    if theta is None and "theta" not in tdoc:
        col.errors.append("triplet.theta is required")
    if sigma2 is not None and sigma2 < 0:
        col.errors.append(f"sigma2 must be ≥ 0, got {sigma2:g}")
    if theta is not None and theta < 0:
        col.errors.append(f"theta must be ≥ 0, got {theta:g}")

    mdoc = tdoc.get("measure", {"family": "zero"})
    family = mdoc.get("family") if isinstance(mdoc, dict) else None
    params: Dict[str, Any] = {}
    if not isinstance(family, str):
        col.errors.append("triplet.measure.family is required")
    else:
        for key, value in (mdoc.get("params") or {}).items():
            try:
                params[key] = _numbers(value)
            except ValueError as e:
                col.errors.append(f"triplet.measure.params.{key}: {e}")
        col.errors.extend(family_errors(family, params, theta if theta is not None else 0.0))

    truncation = col.number(doc, "truncation")
    if truncation is not None and not truncation > 0:
        col.errors.append(f"truncation must be > 0, got {truncation:g}")
    horizon = col.number(doc, "horizon", DEFAULT_HORIZON) or DEFAULT_HORIZON
    if not 0 < horizon < math.inf:
        col.errors.append(f"horizon must be positive and finite, got {horizon:g}")
    if "query_times" in doc:
        try:
            queries = sorted(_numbers(doc["query_times"]))
        except (ValueError, TypeError) as e:
            col.errors.append(f"query_times: {e}")
            queries = []
    else:
        queries = [horizon * i / QUERY_STEPS for i in range(QUERY_STEPS + 1)]
        raw["query_times"] = queries
    if any(not 0 <= q <= horizon for q in queries):
        col.errors.append(f"query_times must lie in [0, {horizon:g}]")

    cdoc = doc.get("caps") or {}
    base = caps or Caps()
    if not isinstance(cdoc, dict):
        col.errors.append("caps must be an object")
        cdoc = {}
    caps_value = Caps(col.count(cdoc, "max_particles", base.max_particles, "caps."),
                      col.count(cdoc, "max_events", base.max_events, "caps."))
    raw["caps"] = {"max_particles": caps_value.max_particles,
                   "max_events": caps_value.max_events}

    replicas = doc.get("replicas", DEFAULT_REPLICAS)
    if not isinstance(replicas, int) or replicas < 1:
        col.errors.append(f"replicas must be a positive integer, got {replicas!r}")
        replicas = DEFAULT_REPLICAS
    seed = doc.get("seed", DEFAULT_SEED)
    if not isinstance(seed, int) or seed < 0:
        col.errors.append(f"seed must be a non-negative integer, got {seed!r}")
        seed = DEFAULT_SEED
    eps = col.number(doc, "cutoff", cutoff if cutoff is not None else DEFAULT_CUTOFF)
    if eps is None or not 0 < eps < 1:
        col.errors.append(f"cutoff must lie in (0, 1), got {eps}")
        eps = DEFAULT_CUTOFF
    raw.update(replicas=replicas, seed=seed)
    raw.setdefault("cutoff", eps)
    raw.setdefault("horizon", horizon)
    raw.setdefault("truncation", None)

    expect = doc.get("expect") or {}
    if not isinstance(expect, dict):
        col.errors.append("expect must be an object")
        expect = {}
    experiments: List[Dict[str, Any]] = []
    for i, entry in enumerate(doc.get("experiments") or []):
        parsed = _experiment(entry, i, col.errors)
        if parsed is not None:
            experiments.append(parsed)
    raw.setdefault("expect", expect)
    raw.setdefault("experiments", [])

    if col.errors:
        raise ScenarioError(col.errors, source)
    try:
        measure = build(family, params)  # type: ignore[arg-type]
        triplet = Triplet(sigma2, a, measure, theta)  # type: ignore[arg-type]
    except (MeasureError, ValueError, KeyError, TypeError) as e:
        raise ScenarioError([str(e)], source) from None
    return Scenario(name, triplet, truncation, horizon, queries, caps_value, replicas, seed, eps,
                    dict(expect), experiments, raw)


def parse_scenario(path: Union[str, Path], caps: Optional[Caps] = None,
                   cutoff: Optional[float] = None) -> Scenario:
    """Read and validate a scenario file."""
    p = Path(path)
    if not p.is_file():
        raise ScenarioError([f"no such file: {p}"], str(p))
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ScenarioError([f"invalid JSON: {e}"], str(p)) from None
    return scenario_from_dict(doc, str(p), caps, cutoff)


def loads(text: str, caps: Optional[Caps] = None, cutoff: Optional[float] = None) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError([f"invalid JSON: {e}"]) from None
    return scenario_from_dict(doc, "", caps, cutoff)


def _builtin_dir() -> Any:
    return resources.files("blmart") / "scenarios"


def list_builtins() -> List[str]:
    return sorted(entry.name[:-5] for entry in _builtin_dir().iterdir()
                  if entry.name.endswith(".json"))


def load_builtin(name: str, caps: Optional[Caps] = None,
                 cutoff: Optional[float] = None) -> Scenario:
    entry = _builtin_dir() / f"{name}.json"
    if not entry.is_file():
        known = ", ".join(list_builtins())
        raise ScenarioError([f"unknown built-in scenario {name!r} (known: {known})"])
    doc = json.loads(entry.read_text(encoding="utf-8"))
    return scenario_from_dict(doc, f"{name}.json", caps, cutoff)


def resolve(ref: str, caps: Optional[Caps] = None, cutoff: Optional[float] = None) -> Scenario:
    """A path to a scenario file, or the name of a built-in scenario."""
    if Path(ref).is_file() or ref.endswith(".json"):
        return parse_scenario(ref, caps, cutoff)
    return load_builtin(ref, caps, cutoff)
