"""
Run directory storage

Every artifact of a pipeline run lives under one output directory. Writes go
to a temporary file in the target directory and are renamed into place, and
each write records the artifact's sha256 in manifest.json.

Usage:
    from src.run_storage import get_run_store, WITNESS_TRAINED

    store = get_run_store("runs/ghz4")
    store.set_json(WITNESS_TRAINED, witness.to_dict())
    data = store.get_json(WITNESS_TRAINED)
"""
import fnmatch
import hashlib
import json
import logging
import os
import tempfile
import threading
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from src.errors import ArtifactError

logger = logging.getLogger(__name__)

# Artifact keys (paths relative to the run directory)
SEPARABLE_SAMPLES = "data/separable.csv"
ENTANGLED_SAMPLES = "data/entangled.csv"
WITNESS_TRAINED = "witness_trained.json"
WITNESS_ADJUSTED = "witness_adjusted.json"
MSO_TRACE = "mso_trace.csv"
RFE_WITNESS = "rfe/witness.json"
RFE_TRACE = "rfe/trace.json"
RFE_LEVELS = "rfe/levels.csv"
VERIFICATION = "verification.json"
COMPARISON_CSV = "comparison.csv"
COMPARISON_TEXT = "comparison.txt"
REPORT = "report.html"
MANIFEST = "manifest.json"


def sidecar_key(key: str) -> str:
    """JSON header stored next to a sample file."""
    return str(Path(key).with_suffix(".json"))


def digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class RunStore:
    """Artifact store rooted at a run directory"""

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        self._lock = threading.Lock()

    def path(self, key: str) -> Path:
        return self.root / key

    def get(self, key: str) -> Optional[bytes]:
        """Raw bytes of an artifact, or None if absent"""
        path = self.path(key)
        if not path.is_file():
            return None
        return path.read_bytes()

    def require(self, key: str) -> bytes:
        data = self.get(key)
        if data is None:
            raise ArtifactError(f"missing artifact: {self.path(key)}")
        return data

    def set(self, key: str, value: bytes, command: Optional[str] = None) -> str:
        """Atomically write an artifact and record its digest; returns the digest."""
        path = self.path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as f:
                f.write(value)
            os.replace(tmp, path)
        except OSError as e:
            Path(tmp).unlink(missing_ok=True)
            raise ArtifactError(f"failed to write {path}: {e}") from e
        sha = digest(value)
        if key != MANIFEST:
            self._record(key, sha, len(value), command)
        logger.debug("Wrote %s (%d bytes)", path, len(value))
        return sha

    def delete(self, key: str) -> bool:
        path = self.path(key)
        if path.is_file():
            path.unlink()
            return True
        return False

    def exists(self, key: str) -> bool:
        return self.path(key).is_file()

    def keys(self, pattern: str = "*") -> List[str]:
        """Artifact keys matching a glob pattern"""
        if not self.root.is_dir():
            return []
        found = [
            p.relative_to(self.root).as_posix()
            for p in self.root.rglob("*")
            if p.is_file() and not p.name.startswith(".")
        ]
        return sorted(k for k in found if fnmatch.fnmatch(k, pattern))

    def get_text(self, key: str) -> str:
        return self.require(key).decode("utf-8")

    def set_text(self, key: str, value: str, command: Optional[str] = None) -> str:
        return self.set(key, value.encode("utf-8"), command)

    def get_json(self, key: str) -> Optional[Any]:
        """Parsed JSON artifact, or None if absent"""
        data = self.get(key)
        if data is None:
            return None
        try:
            return json.loads(data.decode("utf-8"))
        except json.JSONDecodeError as e:
            raise ArtifactError(f"{self.path(key)} is not valid JSON: {e}") from None

    def set_json(self, key: str, value: Any, command: Optional[str] = None) -> str:
        data = json.dumps(value, indent=2, ensure_ascii=False, default=self._json_serializer) + "\n"
        return self.set(key, data.encode("utf-8"), command)

    @staticmethod
    def _json_serializer(obj: Any) -> Any:
        """JSON fallback for enums and numpy scalars"""
        if isinstance(obj, Enum):
            return obj.value
        if isinstance(obj, np.generic):
            return obj.item()
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        raise TypeError(f"Object of type {type(obj)} is not JSON serializable")

    # ===== Manifest =====

    def manifest(self) -> Dict[str, Any]:
        return self.get_json(MANIFEST) or {"artifacts": {}}

    def update_manifest(self, **fields: Any) -> None:
        with self._lock:
            manifest = self.manifest()
            manifest.update(fields)
            self.set_json(MANIFEST, manifest)

    def _record(self, key: str, sha: str, size: int, command: Optional[str]) -> None:
        # entries hold no timestamps
        with self._lock:
            manifest = self.manifest()
            manifest.setdefault("artifacts", {})[key] = {"sha256": sha, "bytes": size, "command": command}
            self.set_json(MANIFEST, manifest)


_stores: Dict[str, RunStore] = {}


def get_run_store(output_dir: str | os.PathLike) -> RunStore:
    """Store instance for a run directory (one per resolved path)"""
    key = str(Path(output_dir).resolve())
    if key not in _stores:
        _stores[key] = RunStore(output_dir)
    return _stores[key]
