"""Crash-safe study persistence.

Mutations are appended to a JSON-lines event log and fsynced before being
acknowledged; periodic snapshots are written to a temp file and renamed into
place, so a reader always sees either the previous or the new snapshot,
never a torn one.  Replaying events after the snapshot sequence number
restores the latest state.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Iterator


class EventLog:
    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._seq = sum(1 for _ in self.replay()) if self.path.exists() else 0
        self._fh = open(self.path, "a", encoding="utf-8")

    @property
    def seq(self) -> int:
        return self._seq

    def append(self, kind: str, payload: dict) -> int:
        self._seq += 1
        record = {"seq": self._seq, "kind": kind, **payload}
        self._fh.write(json.dumps(record, sort_keys=True) + "\n")
        self._fh.flush()
        os.fsync(self._fh.fileno())
        return self._seq

    def replay(self) -> Iterator[dict]:
        if not self.path.exists():
            return
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    yield json.loads(line)

    def close(self) -> None:
        self._fh.close()


def write_snapshot(path: Path, state: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(state, fh, sort_keys=True, indent=2)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def read_snapshot(path: Path) -> dict | None:
    path = Path(path)
    if not path.exists():
        return None
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
