"""Run manifests: what was run, with which inputs, and the digests of what it wrote."""

import hashlib
import platform
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np
import scipy

from . import __version__
from .export import write_json


def digest(payload: Union[str, bytes]) -> str:
    """Hex-encoded SHA-256 of ``payload``."""
    data = payload.encode("utf-8") if isinstance(payload, str) else payload
    return hashlib.sha256(data).hexdigest()


def file_digest(path: Path) -> str:
    return digest(path.read_bytes())


def versions() -> Dict[str, str]:
    return {
        "blmart": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def build_manifest(command: str, scenario_text: str, seed: int,
                   outputs: Sequence[Path] = (), extra: Optional[Dict[str, Any]] = None,
                   ) -> Dict[str, Any]:
    """Manifest for one CLI run.

    Carries no timestamp, so reruns with the same inputs give the same bytes.
    """
    manifest: Dict[str, Any] = {
        "command": command,
        "scenario_sha256": digest(scenario_text),
        "seed": seed,
        "versions": versions(),
        "outputs": {p.name: file_digest(p) for p in sorted(outputs, key=lambda p: p.name)},
    }
    if extra:
        manifest.update(extra)
    return manifest


def write_manifest(out: Path, manifest: Dict[str, Any]) -> Path:
    return write_json(out / "manifest.json", manifest)
