"""Run directories and sealed experiment manifests."""
from __future__ import annotations

import hashlib
import json
import os
import stat
from dataclasses import dataclass, field
from pathlib import Path

from .. import __version__
from ..errors import DataError

OUTPUT_ROOT_ENV = "VCMLAB_OUTPUT_ROOT"
MANIFEST_NAME = "manifest.json"


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))


def new_run_dir(experiment: str, verb: str, root: Path | None = None) -> Path:
    """A fresh directory ``<root>/<experiment>/<verb>``; reruns get ``-1``, ``-2``, ... suffixes."""
    base = (root or output_root()) / experiment
    base.mkdir(parents=True, exist_ok=True)
    candidate, n = base / verb, 0
    while True:
        try:
            candidate.mkdir()
            return candidate
        except FileExistsError:
            n += 1
            candidate = base / f"{verb}-{n}"


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class ExperimentManifest:
    experiment_id: str
    command: str
    config: dict
    dataset_fingerprint: str | None = None
    checkpoints: list[str] = field(default_factory=list)
    points: list[dict] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    tool_version: str = __version__

    def seal(self, run_dir) -> Path:
        """Write the manifest once, read-only; every referenced file must exist."""
        run_dir = Path(run_dir)
        hashes = {}
        for rel in [*self.checkpoints, *self.outputs]:
            p = run_dir / rel
            if not p.is_file():
                raise DataError(f"manifest references missing file {p}")
            hashes[rel] = file_sha256(p)
        body = {
            "experiment_id": self.experiment_id, "command": self.command, "tool_version": self.tool_version,
            "config": self.config, "dataset_fingerprint": self.dataset_fingerprint,
            "checkpoints": self.checkpoints, "outputs": self.outputs, "points": self.points,
            "sha256": hashes, "sealed": True,
        }
        path = run_dir / MANIFEST_NAME
        with open(path, "x") as fh:  # never overwrite
            json.dump(body, fh, indent=2, sort_keys=True)
            fh.write("\n")
        path.chmod(stat.S_IRUSR | stat.S_IRGRP | stat.S_IROTH)
        return path


def load_manifest(path) -> dict:
    return json.loads(Path(path).read_text())
