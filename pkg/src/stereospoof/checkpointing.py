"""Versioned checkpoint container shared by the converter and the detector.

A checkpoint is a torch-serialized dict holding parameter arrays, the
hyperparameter dataclass as a plain dict, a frozen flag, and free-form
metadata (seed, creation info).  Writes are atomic (temp file then rename)
and each checkpoint gets a small human-readable model card next to it.
"""

from __future__ import annotations

import dataclasses
import os
import tempfile
from pathlib import Path

import torch

from .errors import ValidationError

FORMAT_VERSION = 1


def atomic_torch_save(payload, path) -> Path:
    """torch.save through a temp file and rename, so readers never see partial writes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            torch.save(payload, fh)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path


def save_checkpoint(path, kind: str, state_dict: dict, config, frozen: bool = False,
                    metadata: dict | None = None) -> Path:
    path = Path(path)
    payload = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "config": dataclasses.asdict(config) if dataclasses.is_dataclass(config) else dict(config),
        "state_dict": {k: v.cpu() for k, v in state_dict.items()},
        "frozen": bool(frozen),
        "metadata": dict(metadata or {}),
    }
    atomic_torch_save(payload, path)
    _write_model_card(path, payload)
    return path


def load_checkpoint(path, expected_kind: str | None = None) -> dict:
    path = Path(path)
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise ValidationError(f"{path}: not a recognized checkpoint container")
    if payload["format_version"] != FORMAT_VERSION:
        raise ValidationError(
            f"{path}: unsupported checkpoint version {payload['format_version']}")
    if expected_kind is not None and payload.get("kind") != expected_kind:
        raise ValidationError(
            f"{path}: checkpoint kind {payload.get('kind')!r}, expected {expected_kind!r}")
    return payload


def _write_model_card(path: Path, payload: dict) -> None:
    n_params = sum(int(t.numel()) for t in payload["state_dict"].values())
    lines = [
        f"kind: {payload['kind']}",
        f"format_version: {payload['format_version']}",
        f"frozen: {payload['frozen']}",
        f"parameters: {n_params}",
    ]
    for key, value in sorted(payload["metadata"].items()):
        lines.append(f"{key}: {value}")
    lines.append("config:")
    for key, value in payload["config"].items():
        lines.append(f"  {key}: {value}")
    card = path.with_suffix(path.suffix + ".card.txt")
    card.write_text("\n".join(lines) + "\n", encoding="utf-8")
