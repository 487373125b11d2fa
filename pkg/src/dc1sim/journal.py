"""Append-only journal with snapshot support.

Catalog state machines persist by writing one JSON record per mutation;
replaying the journal (optionally on top of a snapshot) reconstructs the
exact state. All nondeterministic inputs (timestamps, generated ids) are
decided before a record is appended, so replay is bit-exact.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Callable, Iterator, Optional


class Journal:
    """One append-only JSON-lines file plus an optional snapshot."""

    def __init__(self, path, sync: bool = False):
        self.path = Path(path)
        self.snapshot_path = self.path.with_suffix(self.path.suffix + ".snap")
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = None
        self.sync = sync  # fsync per record; off by default for throughput
        self.entry_count = 0

    def _ensure_open(self):
        if self._fh is None:
            self._fh = open(self.path, "a")

    def append(self, op: str, payload: dict):
        self._ensure_open()
        self._fh.write(json.dumps({"op": op, "payload": payload},
                                  separators=(",", ":"), sort_keys=True) + "\n")
        self._fh.flush()
        if self.sync:
            os.fsync(self._fh.fileno())
        self.entry_count += 1

    def entries(self) -> Iterator[tuple[str, dict]]:
        if not self.path.exists():
            return
        with open(self.path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                yield rec["op"], rec["payload"]

    def write_snapshot(self, state: dict):
        """Snapshot the state and truncate the journal (snapshot covers it)."""
        tmp = self.snapshot_path.with_suffix(".tmp")
        with open(tmp, "w") as fh:
            json.dump(state, fh, separators=(",", ":"), sort_keys=True)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, self.snapshot_path)
        self.close()
        self.path.unlink(missing_ok=True)
        self.entry_count = 0

    def read_snapshot(self) -> Optional[dict]:
        if not self.snapshot_path.exists():
            return None
        with open(self.snapshot_path) as fh:
            return json.load(fh)

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None


class JournaledStateMachine:
    """Base for state machines persisted through a Journal.

    Subclasses implement ``_apply(op, payload)`` (the only place state
    changes) and the snapshot hooks. Mutators validate, then call
    ``_commit`` which journals and applies.
    """

    def __init__(self, journal: Optional[Journal] = None):
        self.journal = journal
        if journal is not None:
            snap = journal.read_snapshot()
            if snap is not None:
                self._load_snapshot(snap)
            for op, payload in journal.entries():
                self._apply(op, payload)
                journal.entry_count += 1

    def _commit(self, op: str, payload: dict):
        if self.journal is not None:
            self.journal.append(op, payload)
        return self._apply(op, payload)

    def checkpoint(self):
        if self.journal is not None:
            self.journal.write_snapshot(self._dump_snapshot())

    # subclass API
    def _apply(self, op: str, payload: dict):
        raise NotImplementedError

    def _dump_snapshot(self) -> dict:
        raise NotImplementedError

    def _load_snapshot(self, state: dict):
        raise NotImplementedError
