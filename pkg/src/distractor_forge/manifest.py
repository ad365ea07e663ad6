"""Run manifests and atomic output writing."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

logger = logging.getLogger(__name__)

MANIFEST_DIR = "manifests"


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def atomic_write(path: Path, data: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


@dataclass
class RunManifest:
    command: str
    config_sha256: str
    template_sha256: dict[str, str]
    rng_seed: int
    models: dict[str, str]
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    logs: dict[str, str] = field(default_factory=dict)
    started_at: str = field(default_factory=now)
    finished_at: str | None = None

    def to_record(self) -> dict:
        return asdict(self)


def manifest_path(out_dir: Path, command: str) -> Path:
    return out_dir / MANIFEST_DIR / f"{command.replace(' ', '_')}.json"


def read_manifest(out_dir: Path, command: str) -> dict | None:
    path = manifest_path(out_dir, command)
    if not path.is_file():
        return None
    return json.loads(path.read_text(encoding="utf-8"))


def check_upstream(out_dir: Path, command: str, rel: str, dataset_digest: str | None = None) -> list[str]:
    """Warnings for an upstream artifact that no longer matches its manifest."""
    warnings = []
    manifest = read_manifest(out_dir, command)
    if manifest is None:
        warnings.append(f"{rel}: no manifest from '{command}', cannot check freshness")
    else:
        recorded = manifest.get("outputs", {}).get(rel)
        if recorded is not None and recorded != file_digest(out_dir / rel):
            warnings.append(f"{rel} changed since '{command}' wrote it")
        if dataset_digest is not None:
            upstream = manifest.get("inputs", {}).get("dataset")
            if upstream is not None and upstream != dataset_digest:
                warnings.append(f"{rel} was built from a different dataset")
    for w in warnings:
        logger.warning("stale input: %s", w)
    return warnings
