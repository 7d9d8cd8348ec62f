"""Append-only newline-delimited JSON record store.

Every accepted input becomes exactly one record with a gapless, backend-
assigned sequence number. A record is acknowledged only after it reached the
OS (fsync per batch), so a crash between ingests never loses acknowledged
data; a partial trailing line from a crash is truncated away on recovery.
"""
from __future__ import annotations

import json
import os
import queue
import threading


class RecordStore:
    def __init__(self, path, fsync_batch: int = 1):
        self.path = str(path)
        self.fsync_batch = max(1, int(fsync_batch))
        self._lock = threading.Lock()
        self._subscribers: list[queue.Queue] = []
        self._records: list[dict] = []
        self._pending_sync = 0
        self._recover()
        self._fh = open(self.path, "a", encoding="utf-8")

    # -- recovery ------------------------------------------------------------

    def _recover(self) -> None:
        if not os.path.exists(self.path):
            return
        with open(self.path, "rb") as fh:
            data = fh.read()
        good_end = 0
        start = 0
        while True:
            nl = data.find(b"\n", start)
            if nl == -1:
                break  # trailing bytes without a newline: crash artifact
            line = data[start:nl]
            if line:
                try:
                    self._records.append(json.loads(line))
                except json.JSONDecodeError:
                    break  # half-written line
            good_end = nl + 1
            start = nl + 1
        if good_end < len(data):
            with open(self.path, "r+b") as fh:
                fh.truncate(good_end)

    # -- writes ---------------------------------------------------------------

    @property
    def next_sequence(self) -> int:
        return self._records[-1]["sequence"] + 1 if self._records else 0

    def append(self, record: dict) -> dict:
        """Assign the next sequence number, persist, then fan out."""
        with self._lock:
            record = dict(record)
            record["sequence"] = self.next_sequence
            self._fh.write(json.dumps(record, separators=(",", ":")) + "\n")
            self._pending_sync += 1
            if self._pending_sync >= self.fsync_batch:
                self._fh.flush()
                os.fsync(self._fh.fileno())
                self._pending_sync = 0
            self._records.append(record)
            for q in list(self._subscribers):
                try:
                    q.put_nowait(record)
                except queue.Full:
                    # a stalled stream consumer must not block ingestion; it
                    # can resynchronize via /records
                    try:
                        q.get_nowait()
                        q.put_nowait(record)
                    except queue.Empty:
                        pass
            return record

    def flush(self) -> None:
        with self._lock:
            self._fh.flush()
            os.fsync(self._fh.fileno())
            self._pending_sync = 0

    def close(self) -> None:
        self.flush()
        self._fh.close()

    # -- reads ------------------------------------------------------------------

    def records_since(self, since: int, limit: int = 500) -> list:
        with self._lock:
            out = [r for r in self._records if r["sequence"] >= since]
        return out[:limit]

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    def all_records(self) -> list:
        with self._lock:
            return list(self._records)

    # -- streaming ----------------------------------------------------------------

    def subscribe(self, maxsize: int = 1000) -> queue.Queue:
        q = queue.Queue(maxsize=maxsize)
        with self._lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._lock:
            if q in self._subscribers:
                self._subscribers.remove(q)
