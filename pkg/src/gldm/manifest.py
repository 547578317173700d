"""Run manifests written beside every CLI output."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__

MANIFEST_NAME = "run_manifest.json"


def file_digest(path) -> str:
    h = hashlib.sha256()
    p = Path(path)
    if p.is_dir():
        for child in sorted(p.rglob("*")):
            if child.is_file() and child.name != MANIFEST_NAME:
                h.update(str(child.relative_to(p)).encode())
                h.update(child.read_bytes())
    else:
        h.update(p.read_bytes())
    return h.hexdigest()


def config_digest(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True, default=str).encode()).hexdigest()


@dataclass
class RunManifest:
    command: list[str]
    config: dict
    config_digest: str
    seeds: dict
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    version: str = __version__
    wall_clock: float = 0.0

    @classmethod
    def build(cls, command, config: dict, seeds: dict, inputs=(), outputs=(), wall_clock: float = 0.0) -> "RunManifest":
        return cls(
            list(command),
            config,
            config_digest(config),
            seeds,
            {str(p): file_digest(p) for p in inputs},
            {str(p): file_digest(p) for p in outputs},
            wall_clock=wall_clock,
        )

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True, default=str) + "\n")

    @classmethod
    def read(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))


def manifest_path(output) -> Path:
    p = Path(output)
    return p / MANIFEST_NAME if p.is_dir() else p.with_name(p.name + ".manifest.json")


def verify(manifest: RunManifest) -> list[str]:
    """Names of digests that no longer match; empty when everything checks out."""
    bad = []
    if config_digest(manifest.config) != manifest.config_digest:
        bad.append("config")
    for kind in (manifest.inputs, manifest.outputs):
        for p, d in kind.items():
            if not Path(p).exists() or file_digest(p) != d:
                bad.append(p)
    return bad

