"""Run manifests: what was produced, from which configuration, with content hashes."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Iterable, List, Optional

from . import __version__

MANIFEST_NAME = "manifest.json"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def digest_config(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def now_iso() -> str:
    # SOURCE_DATE_EPOCH pins timestamps for byte-reproducible manifests
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch:
        return datetime.fromtimestamp(int(epoch), tz=timezone.utc).isoformat()
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    seed: Optional[int] = None
    tool_version: str = __version__
    config_digests: Dict[str, str] = field(default_factory=dict)
    configs: Dict[str, object] = field(default_factory=dict)
    timestamps: Dict[str, str] = field(default_factory=lambda: {"started": now_iso()})
    files: List[dict] = field(default_factory=list)

    def add_config(self, stage: str, config) -> None:
        self.configs[stage] = config
        self.config_digests[stage] = digest_config(config)

    def record(self, root: Path, paths: Iterable[Path]) -> None:
        root = Path(root)
        for p in paths:
            p = Path(p)
            self.files.append({
                "path": p.relative_to(root).as_posix(),
                "sha256": sha256_file(p),
                "bytes": p.stat().st_size,
            })

    def to_dict(self) -> dict:
        return {
            "tool": "gehshift",
            "tool_version": self.tool_version,
            "command": self.command,
            "seed": self.seed,
            "timestamps": self.timestamps,
            "config_digests": dict(sorted(self.config_digests.items())),
            "configs": dict(sorted(self.configs.items())),
            "files": sorted(self.files, key=lambda f: f["path"]),
        }

    def write(self, root) -> Path:
        self.timestamps["finished"] = now_iso()
        path = Path(root) / MANIFEST_NAME
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8", newline="\n")
        return path


def verify_manifest(path) -> List[str]:
    """Return the paths whose current hash differs from the recorded one."""
    path = Path(path)
    data = json.loads(path.read_text(encoding="utf-8"))
    bad = []
    for entry in data["files"]:
        target = path.parent / entry["path"]
        if not target.exists() or sha256_file(target) != entry["sha256"]:
            bad.append(entry["path"])
    return bad
