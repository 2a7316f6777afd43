"""Self-describing checkpoint container shared by codec and task networks."""
from __future__ import annotations

from pathlib import Path

import torch

from .errors import VersionMismatchError

FORMAT_TAG = "vcmlab-checkpoint"
FORMAT_VERSION = 1


def save_checkpoint(path, kind: str, config: dict, module: torch.nn.Module, meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format": FORMAT_TAG,
        "version": FORMAT_VERSION,
        "kind": kind,
        "config": config,
        "state_dict": {k: v.detach().cpu().clone() for k, v in module.state_dict().items()},
        "meta": dict(meta or {}),
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    tmp.replace(path)
    return path


def read_checkpoint(path, kind: str | None = None) -> dict:
    payload = torch.load(Path(path), map_location="cpu", weights_only=True)
    if not isinstance(payload, dict) or payload.get("format") != FORMAT_TAG:
        raise VersionMismatchError(f"{path} is not a {FORMAT_TAG} file")
    if payload.get("version") != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: checkpoint version {payload.get('version')}, expected {FORMAT_VERSION}")
    if kind is not None and payload.get("kind") != kind:
        raise VersionMismatchError(f"{path} holds a {payload.get('kind')!r} checkpoint, expected {kind!r}")
    return payload
