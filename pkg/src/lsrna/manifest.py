"""Content hashes and per-directory output manifests."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any

MANIFEST = "manifest.json"
REQUIRED = ("config.yaml", "run.json")


def stable_hash(obj: Any) -> str:
    """sha256 of the canonical JSON form of ``obj``."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(directory: str | Path) -> Path:
    """Record the sha256 of every file below ``directory`` except the manifest itself."""
    directory = Path(directory)
    files = {p.relative_to(directory).as_posix(): file_sha256(p)
             for p in sorted(directory.rglob("*")) if p.is_file() and p.name != MANIFEST}
    path = directory / MANIFEST
    path.write_text(json.dumps({"files": files}, indent=1, sort_keys=True))
    return path


def check_manifest(directory: str | Path) -> list[str]:
    """Problems found in ``directory``; an empty list means the manifest is complete and correct."""
    directory = Path(directory)
    path = directory / MANIFEST
    if not path.is_file():
        return [f"missing {MANIFEST}"]
    try:
        files = json.loads(path.read_text())["files"]
    except (ValueError, KeyError):
        return [f"unreadable {MANIFEST}"]
    problems = [f"missing required file {name}" for name in REQUIRED if name not in files]
    present = {p.relative_to(directory).as_posix() for p in directory.rglob("*")
               if p.is_file() and p.name != MANIFEST}
    for name in sorted(present - set(files)):
        problems.append(f"unlisted file {name}")
    for name, digest in sorted(files.items()):
        if name not in present:
            problems.append(f"listed file {name} is missing")
        elif file_sha256(directory / name) != digest:
            problems.append(f"checksum mismatch for {name}")
    return problems
