"""Append-only hash-chained event log.

Each record is ``index u64 | ts u64 | category u8 | detail_len u32 | detail |
chain[32]`` where ``chain = digest(previous_chain || record_without_chain)``
and the first previous chain is 32 zero bytes. A sidecar ``<log>.head``
holds the latest chain digest and the record count, which is what makes
truncation of trailing records detectable.
"""

from __future__ import annotations

import os
import struct
import threading
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

from ..crypto import DIGEST_BYTES, ct_equal, digest

GENESIS = bytes(DIGEST_BYTES)
_FIXED = struct.Struct(">QQBI")
_HEAD = struct.Struct(">32sQ")


class Category(IntEnum):
    MEM_INTEGRITY = 1
    DATA_PROVENANCE = 2
    NODE_LIFECYCLE = 3
    NETWORK_ANOMALY = 4

    @property
    def label(self) -> str:
        return {1: "MemIntegrity", 2: "DataProvenance", 3: "NodeLifecycle", 4: "NetworkAnomaly"}[self.value]

    @classmethod
    def from_label(cls, label: str) -> "Category":
        for c in cls:
            if c.label == label:
                return c
        raise ValueError(f"unknown log category {label!r}")


@dataclass(frozen=True)
class LogEntry:
    index: int
    timestamp: int
    category: Category
    detail: str
    chain: bytes

    def body(self) -> bytes:
        raw = self.detail.encode()
        return _FIXED.pack(self.index, self.timestamp, self.category, len(raw)) + raw

    def encode(self) -> bytes:
        return self.body() + self.chain

    def render(self) -> str:
        return f"{self.index:06d} {self.timestamp:>12d} {self.category.label:<15} {self.detail}"


@dataclass(frozen=True)
class ChainOk:
    count: int

    def __bool__(self) -> bool:
        return True


@dataclass(frozen=True)
class BrokenAt:
    index: int

    def __bool__(self) -> bool:
        return False


def head_path(path: str | os.PathLike) -> Path:
    return Path(str(path) + ".head")


class Logger:
    """In-memory chain, optionally mirrored to an append-only file."""

    def __init__(self, path: str | os.PathLike | None = None):
        self.path = Path(path) if path is not None else None
        self.entries: list[LogEntry] = []
        self._lock = threading.Lock()
        if self.path is not None:
            if self.path.exists():
                entries, verdict = read_log(self.path)
                if not verdict:
                    raise ValueError(f"existing log is broken at entry {verdict.index}")
                self.entries = entries
            else:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                self.path.touch()
                self._write_head()

    @property
    def head(self) -> bytes:
        return self.entries[-1].chain if self.entries else GENESIS

    def _write_head(self) -> None:
        tmp = head_path(self.path).with_suffix(".tmp")
        tmp.write_bytes(_HEAD.pack(self.head, len(self.entries)))
        os.replace(tmp, head_path(self.path))

    def append(self, category: Category, detail: str, timestamp: int = 0) -> LogEntry:
        with self._lock:
            draft = LogEntry(len(self.entries), timestamp, Category(category), detail, b"")
            entry = LogEntry(draft.index, timestamp, draft.category, detail, digest(self.head + draft.body()))
            self.entries.append(entry)
            if self.path is not None:
                with open(self.path, "ab") as fh:
                    fh.write(entry.encode())
                self._write_head()
            return entry

    def by_category(self, category: Category) -> list[LogEntry]:
        return [e for e in self.entries if e.category == category]

    def render(self) -> str:
        return "\n".join(e.render() for e in self.entries) + ("\n" if self.entries else "")


def parse_records(data: bytes) -> tuple[list[LogEntry], int | None]:
    """Parse records front to back; returns entries and the index of an unparsable tail, if any."""
    entries: list[LogEntry] = []
    pos = 0
    while pos < len(data):
        i = len(entries)
        if len(data) - pos < _FIXED.size:
            return entries, i
        index, ts, cat, n = _FIXED.unpack_from(data, pos)
        end = pos + _FIXED.size + n + DIGEST_BYTES
        if end > len(data):
            return entries, i
        try:
            category = Category(cat)
            detail = data[pos + _FIXED.size:end - DIGEST_BYTES].decode()
        except (ValueError, UnicodeDecodeError):
            return entries, i
        entries.append(LogEntry(index, ts, category, detail, data[end - DIGEST_BYTES:end]))
        pos = end
    return entries, None


def verify_entries(entries: list[LogEntry], head: bytes | None = None, count: int | None = None) -> ChainOk | BrokenAt:
    prev = GENESIS
    for i, e in enumerate(entries):
        if e.index != i or not ct_equal(digest(prev + e.body()), e.chain):
            return BrokenAt(i)
        prev = e.chain
    if count is not None and count != len(entries):
        return BrokenAt(min(count, len(entries)))
    if head is not None and not ct_equal(head, prev):
        return BrokenAt(len(entries))
    return ChainOk(len(entries))


def read_log(path: str | os.PathLike) -> tuple[list[LogEntry], ChainOk | BrokenAt]:
    data = Path(path).read_bytes()
    entries, bad = parse_records(data)
    if bad is not None:
        # verify what parsed; a break earlier than the garbage wins
        verdict = verify_entries(entries)
        return entries, verdict if not verdict else BrokenAt(bad)
    hp = head_path(path)
    if not hp.exists():
        return entries, verify_entries(entries) and BrokenAt(len(entries))
    raw = hp.read_bytes()
    if len(raw) != _HEAD.size:
        return entries, verify_entries(entries) and BrokenAt(len(entries))
    head, count = _HEAD.unpack(raw)
    return entries, verify_entries(entries, head, count)


def verify_log_chain(path: str | os.PathLike) -> ChainOk | BrokenAt:
    return read_log(path)[1]
