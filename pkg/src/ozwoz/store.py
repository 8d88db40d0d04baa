"""File-backed persistence: experiment documents, session logs, assets.

Layout under the data directory:

    experiments/<id>.json    canonical JSON documents (atomic replace)
    sessions/<id>.ndjson     append-only event logs, one event per line
    sessions/index.json      session registry: tokens, experiment id, created_at
    assets/<id>              content-addressed blobs (id = sha256 prefix)
    adapters.json            optional adapter registry, loaded at startup

No external database; a single process owns the directory.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from pathlib import Path
from typing import Optional

from .errors import NotFound
from .model import Experiment, canonical_json
from .session import SessionEvent, read_log


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


class DataStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.experiments_dir = self.root / "experiments"
        self.sessions_dir = self.root / "sessions"
        self.assets_dir = self.root / "assets"
        for d in (self.experiments_dir, self.sessions_dir, self.assets_dir):
            d.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    # -- experiments -------------------------------------------------------

    def _experiment_path(self, experiment_id: str) -> Path:
        safe = experiment_id.replace("/", "_")
        return self.experiments_dir / f"{safe}.json"

    def list_experiments(self) -> list[dict]:
        docs = []
        for path in sorted(self.experiments_dir.glob("*.json")):
            docs.append(json.loads(path.read_text(encoding="utf-8")))
        return docs

    def get_experiment(self, experiment_id: str) -> Experiment:
        path = self._experiment_path(experiment_id)
        if not path.exists():
            raise NotFound(f"experiment {experiment_id!r} not found")
        return Experiment.from_dict(json.loads(path.read_text(encoding="utf-8")))

    def put_experiment(self, experiment: Experiment) -> None:
        _atomic_write(self._experiment_path(experiment.id),
                      experiment.to_canonical_json().encode("utf-8"))

    def delete_experiment(self, experiment_id: str) -> None:
        path = self._experiment_path(experiment_id)
        if not path.exists():
            raise NotFound(f"experiment {experiment_id!r} not found")
        path.unlink()

    # -- session registry ----------------------------------------------------

    @property
    def _index_path(self) -> Path:
        return self.sessions_dir / "index.json"

    def session_index(self) -> dict:
        if not self._index_path.exists():
            return {}
        return json.loads(self._index_path.read_text(encoding="utf-8"))

    def register_session(self, session_id: str, record: dict) -> None:
        with self._lock:
            index = self.session_index()
            index[session_id] = record
            _atomic_write(self._index_path, canonical_json(index).encode("utf-8"))

    def log_path(self, session_id: str) -> Path:
        safe = session_id.replace("/", "_")
        return self.sessions_dir / f"{safe}.ndjson"

    def repair_log(self, session_id: str) -> list[SessionEvent]:
        """Load a log, truncating any torn tail so appends stay well-formed."""
        path = self.log_path(session_id)
        if not path.exists():
            raise NotFound(f"no log for session {session_id!r}")
        events = read_log(path)
        good = "".join(canonical_json(e.to_dict()) + "\n" for e in events)
        data = good.encode("utf-8")
        if path.stat().st_size != len(data):
            _atomic_write(path, data)
        return events

    # -- assets --------------------------------------------------------------

    def put_asset(self, data: bytes) -> str:
        asset_id = hashlib.sha256(data).hexdigest()[:16]
        path = self.assets_dir / asset_id
        if not path.exists():
            _atomic_write(path, data)
        return asset_id

    def get_asset(self, asset_id: str) -> bytes:
        path = self.assets_dir / asset_id.replace("/", "_")
        if not path.exists():
            raise NotFound(f"asset {asset_id!r} not found")
        return path.read_bytes()

    def adapters_file(self) -> Optional[Path]:
        path = self.root / "adapters.json"
        return path if path.exists() else None
