"""Embedded single-file write-ahead store.

One JSONL file; each line is ``{"seq": n, "op": "...", "data": {...}, "crc":
"XXXXXXXX"}`` where crc covers the line's seq/op/data rendering. Appends are
flushed and fsynced before the call returns, so every acknowledged mutation
survives a crash.

Recovery rules:
  - a final line that does not decode (torn tail from a crash mid-write) is
    truncated away and replay continues;
  - any other undecodable line, checksum mismatch, or sequence regression
    raises StoreCorrupt naming the file, and the store refuses to open.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import zlib
from pathlib import Path
from typing import Any, Iterator

from .errors import StoreCorrupt


def _crc(seq: int, op: str, data: Any) -> str:
    payload = json.dumps([seq, op, data], separators=(",", ":"), ensure_ascii=False)
    return format(zlib.crc32(payload.encode("utf-8")), "08x")


class WalStore:
    def __init__(self, path: str | os.PathLike[str], *, fsync: bool = True):
        self.path = Path(path)
        self._fsync = fsync
        self._lock = threading.Lock()
        self._entries: list[tuple[str, Any]] = []
        self._next_seq = 0
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._recover()
        self._fh = open(self.path, "a", encoding="utf-8")

    def _recover(self) -> None:
        if not self.path.exists():
            self.path.touch()
            return
        raw = self.path.read_bytes()
        if not raw:
            return
        lines = raw.split(b"\n")
        # a well-formed file ends with a newline, leaving one empty tail entry
        complete, tail = lines[:-1], lines[-1]
        good_bytes = 0
        last_seq = -1
        for i, line in enumerate(complete):
            try:
                doc = json.loads(line.decode("utf-8"))
                seq, op, data, crc = doc["seq"], doc["op"], doc["data"], doc["crc"]
            except (ValueError, KeyError, TypeError, UnicodeDecodeError):
                if i == len(complete) - 1 and not tail:
                    break  # torn final line: drop it
                raise StoreCorrupt(f"undecodable record at line {i + 1} in {self.path}")
            if crc != _crc(seq, op, data):
                raise StoreCorrupt(f"checksum mismatch at line {i + 1} in {self.path}")
            if seq != last_seq + 1:
                raise StoreCorrupt(f"sequence break at line {i + 1} in {self.path}")
            last_seq = seq
            self._entries.append((op, data))
            good_bytes += len(line) + 1
        self._next_seq = last_seq + 1
        if good_bytes < len(raw):
            with open(self.path, "r+b") as fh:
                fh.truncate(good_bytes)
                fh.flush()
                os.fsync(fh.fileno())

    def append(self, op: str, data: Any) -> None:
        with self._lock:
            seq = self._next_seq
            doc = {"seq": seq, "op": op, "data": data, "crc": _crc(seq, op, data)}
            self._fh.write(json.dumps(doc, separators=(",", ":"), ensure_ascii=False) + "\n")
            self._fh.flush()
            if self._fsync:
                os.fsync(self._fh.fileno())
            self._next_seq = seq + 1
            self._entries.append((op, data))

    def replay(self) -> Iterator[tuple[str, Any]]:
        """Entries recovered at open plus those appended since, in order."""
        return iter(list(self._entries))

    def checksum(self) -> str:
        """Content digest of the on-disk file; used to prove reads mutate nothing."""
        with self._lock:
            self._fh.flush()
            return hashlib.sha256(self.path.read_bytes()).hexdigest()

    def close(self) -> None:
        with self._lock:
            if not self._fh.closed:
                self._fh.flush()
                if self._fsync:
                    os.fsync(self._fh.fileno())
                self._fh.close()

    def __enter__(self) -> "WalStore":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()
