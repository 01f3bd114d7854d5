"""Run settings for blmart: ``BLMART_*`` variables, optionally seeded from ~/.blmart/blmart.env.

The file holds one ``KEY=value`` per line. ``export`` prefixes and ``#``
comments are allowed, values may be single- or double-quoted, and variables
already set in the shell take precedence over the file.
"""

import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple

logger = logging.getLogger(__name__)

ENV_FILE = Path.home() / ".blmart" / "blmart.env"

TRUTHY = ("1", "true", "yes")
QUOTES = ("'", '"')


def parse_env_line(line: str) -> Optional[Tuple[str, str]]:
    """``(key, value)`` for an assignment line; ``None`` for blanks, comments and junk."""
    text = line.strip()
    if text.startswith("export "):
        text = text[len("export "):].lstrip()
    if not text or text.startswith("#"):
        return None
    key, sep, value = text.partition("=")
    key, value = key.strip(), value.strip()
    if not sep or not key or " " in key:
        return None
    if len(value) >= 2 and value[0] in QUOTES and value[-1] == value[0]:
        return key, value[1:-1]
    # unquoted values end at an inline comment
    return key, value.split(" #", 1)[0].rstrip()


def load_env_file(path: Path = ENV_FILE) -> Dict[str, str]:
    """Assignments in ``path``; each one is exported unless the shell already sets it."""
    if not path.is_file():
        return {}
    assigned: Dict[str, str] = {}
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        pair = parse_env_line(line)
        if pair is None:
            if line.strip() and not line.strip().startswith("#"):
                logger.warning("%s:%d: not a KEY=value line, skipped", path, number)
            continue
        key, value = pair
        assigned[key] = value
        os.environ.setdefault(key, value)
    return assigned


def default_jobs() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))  # type: ignore[attr-defined]
    except AttributeError:
        return os.cpu_count() or 1


@dataclass(frozen=True)
class Settings:
    jobs: int
    out: Path
    verbose: bool = False
    max_particles: int = 100000
    max_events: int = 20000000
    cutoff: float = 1e-3
    event_budget: float = 50.0


def _number(env: Mapping[str, str], key: str, default: float) -> float:
    raw = env.get(key, "").strip()
    if raw == "":
        return default
    try:
        return float(raw)
    except ValueError:
        logger.warning("ignoring %s=%r: not a number", key, raw)
        return default


def load_settings(env: Optional[Mapping[str, str]] = None) -> Settings:
    """Settings from ``BLMART_*`` variables; unset or malformed values fall back to defaults."""
    source = os.environ if env is None else env
    return Settings(
        jobs=max(1, int(_number(source, "BLMART_JOBS", default_jobs()))),
        out=Path(source.get("BLMART_OUT") or "blmart-out"),
        verbose=source.get("BLMART_VERBOSE", "").lower() in TRUTHY,
        max_particles=int(_number(source, "BLMART_MAX_PARTICLES", 100000)),
        max_events=int(_number(source, "BLMART_MAX_EVENTS", 20000000)),
        cutoff=_number(source, "BLMART_CUTOFF", 1e-3),
        event_budget=_number(source, "BLMART_EVENT_BUDGET", 50.0),
    )
