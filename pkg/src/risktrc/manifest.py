"""Run manifests: one ``manifest.json`` per output directory.

The manifest stores the argument vector with the output directory factored
out, so ``risktrc replay`` can re-execute a run into a fresh directory and
the numeric files can be compared byte for byte.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .modelio import atomic_write_text

MANIFEST_NAME = "manifest.json"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_json(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    argv: list[str]
    options: dict
    version: str
    seed: int | None = None
    config_file: str | None = None
    config_digest: str | None = None
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    exit_code: int | None = None
    started_at: str = field(default_factory=utc_now)
    finished_at: str | None = None

    def record_input(self, path) -> None:
        self.inputs[str(path)] = sha256_file(path)

    def record_output(self, out_dir: Path, path: Path) -> None:
        self.outputs[str(Path(path).relative_to(out_dir))] = sha256_file(path)

    def write(self, out_dir) -> Path:
        self.finished_at = utc_now()
        target = Path(out_dir) / MANIFEST_NAME
        atomic_write_text(target, json.dumps(asdict(self), indent=1, sort_keys=True) + "\n")
        return target

    @classmethod
    def load(cls, path) -> "RunManifest":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(**doc)
