"""
Run manifests: what was run, with which plan, and what it wrote.
"""

import hashlib
import json
import logging
import os
import subprocess
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from config import Config

logger = logging.getLogger(__name__)

TOOL_VERSION = "0.3.0"


def file_sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def git_describe() -> Optional[str]:
    try:
        result = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Config.BASE_DIR,
            capture_output=True,
            text=True,
            timeout=5,
        )
    except (OSError, subprocess.SubprocessError):
        return None
    if result.returncode != 0:
        return None
    return result.stdout.strip() or None


@dataclass
class RunManifest:
    command: str
    config: Dict
    tool_version: str = TOOL_VERSION
    git: Optional[str] = None
    threads: int = 1
    hardware_threads: int = field(default_factory=lambda: os.cpu_count() or 1)
    seed: Optional[int] = None
    wall_time_s: float = 0.0
    files: Dict[str, str] = field(default_factory=dict)
    summary: Dict = field(default_factory=dict)
    exit_code: int = 0
    error: Optional[str] = None
    _started: float = field(default_factory=time.perf_counter, repr=False)

    def record_file(self, path: Path):
        self.files[Path(path).name] = file_sha256(path)

    def finish(self, out_dir: Path) -> Path:
        self.wall_time_s = round(time.perf_counter() - self._started, 3)
        payload = {k: v for k, v in asdict(self).items() if not k.startswith("_")}
        path = Path(out_dir) / "manifest.json"
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, sort_keys=True, default=str)
        logger.info(f"🧾 manifest written to {path} ({len(self.files)} file(s))")
        return path


def load_manifest(path: Path) -> Dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def hashes_match(first: Dict, second: Dict, names: Optional[List[str]] = None) -> bool:
    """Compare recorded file hashes of two manifests"""
    names = names or sorted(set(first["files"]) & set(second["files"]))
    return all(first["files"].get(n) == second["files"].get(n) for n in names)
