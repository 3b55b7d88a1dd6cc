"""Tamper-evident protected memory.

Each stored value ``v`` gets a 16-byte integrity tag
``mac(k_mem, v XOR xof_expand(t, len(v)))`` with a fresh random per-cell
secret ``t``. Tags live in randomly chosen slots of a dedicated tag region;
only this object knows where. Values are readable in the raw arena (and so
pokeable by an adversary); a journal kept outside the arena allows restore.
"""

from __future__ import annotations

import random
import threading
from bisect import insort
from dataclasses import dataclass
from enum import Enum
from typing import Callable, NewType

from .crypto import TAG_BYTES, AlgId, ct_equal, mac, xof_expand, xor_bytes
from .errors import ArenaFull, JournalCorrupt, JournalMissing, TamperDetected, UnknownHandle

Handle = NewType("Handle", int)
LogSink = Callable[[str, str], None]

DEFAULT_ARENA_BYTES = 1 << 20
CELL_SECRET_BYTES = 16


class CellStatus(Enum):
    OK = "OK"
    TAMPERED = "Tampered"


@dataclass
class _Cell:
    value_addr: int
    value_len: int
    tag_addr: int
    t: bytes
    alg: AlgId = AlgId.XOODYAK


@dataclass
class _JournalEntry:
    value: bytes
    mac: bytes


class ProtectedMemory:
    """An arena of ``size`` bytes; the last ``1/tag_fraction`` of it holds tag slots."""

    def __init__(
        self,
        mac_key: bytes,
        size: int = DEFAULT_ARENA_BYTES,
        *,
        tag_fraction: int = 8,
        rng: random.Random | None = None,
        log: LogSink | None = None,
    ):
        tag_region = (size // tag_fraction) // TAG_BYTES * TAG_BYTES
        if tag_region < TAG_BYTES or size - tag_region < 1:
            raise ValueError("arena too small")
        self._rng = rng or random.SystemRandom()
        self._key = mac_key
        self._journal_key = xof_expand(mac_key + b"journal", 16)
        self._log = log
        self._lock = threading.RLock()
        self.memory = bytearray(size)
        self._value_limit = size - tag_region
        # value region: sorted list of free (start, length) extents
        self._free_extents: list[tuple[int, int]] = [(0, self._value_limit)]
        slots = list(range(self._value_limit, size, TAG_BYTES))
        self._rng.shuffle(slots)
        self._free_tags = slots
        self._cells: dict[Handle, _Cell] = {}
        self._journal: dict[Handle, _JournalEntry] = {}
        self._next_handle = 1

    # -- accounting -----------------------------------------------------------

    @property
    def size(self) -> int:
        return len(self.memory)

    def free_value_bytes(self) -> int:
        return sum(n for _, n in self._free_extents)

    def free_tag_slots(self) -> int:
        return len(self._free_tags)

    def live_handles(self) -> list[Handle]:
        with self._lock:
            return sorted(self._cells)

    def __len__(self) -> int:
        return len(self._cells)

    def _alloc_value(self, n: int) -> int:
        for i, (start, length) in enumerate(self._free_extents):
            if length >= n:
                if length == n:
                    del self._free_extents[i]
                else:
                    self._free_extents[i] = (start + n, length - n)
                return start
        raise ArenaFull(f"no free extent of {n} bytes")

    def _free_value(self, start: int, n: int) -> None:
        insort(self._free_extents, (start, n))
        merged: list[tuple[int, int]] = []
        for s, length in self._free_extents:
            if merged and merged[-1][0] + merged[-1][1] == s:
                merged[-1] = (merged[-1][0], merged[-1][1] + length)
            else:
                merged.append((s, length))
        self._free_extents = merged

    def _alloc_tag(self) -> int:
        if not self._free_tags:
            raise ArenaFull("no free tag slot")
        return self._free_tags.pop()

    def _free_tag(self, addr: int) -> None:
        self._free_tags.insert(self._rng.randrange(len(self._free_tags) + 1), addr)

    # -- integrity ------------------------------------------------------------

    def _tag(self, value: bytes, t: bytes) -> bytes:
        return mac(self._key, xor_bytes(value, xof_expand(t, len(value))))

    def _journal_mac(self, handle: Handle, value: bytes) -> bytes:
        return mac(self._journal_key, handle.to_bytes(8, "big") + value)

    def _place(self, cell: _Cell, value: bytes) -> None:
        self.memory[cell.value_addr:cell.value_addr + cell.value_len] = value
        self.memory[cell.tag_addr:cell.tag_addr + TAG_BYTES] = self._tag(value, cell.t)

    def _check(self, handle: Handle) -> bytes | None:
        cell = self._cells.get(handle)
        if cell is None:
            raise UnknownHandle(handle)
        value = bytes(self.memory[cell.value_addr:cell.value_addr + cell.value_len])
        stored = bytes(self.memory[cell.tag_addr:cell.tag_addr + TAG_BYTES])
        return value if ct_equal(self._tag(value, cell.t), stored) else None

    # -- public operations ----------------------------------------------------

    def write_protected(self, value: bytes) -> Handle:
        if len(value) < 1:
            raise ValueError("value must be at least one byte")
        value = bytes(value)
        with self._lock:
            if not self._free_tags:
                raise ArenaFull("no free tag slot")
            addr = self._alloc_value(len(value))
            cell = _Cell(addr, len(value), self._alloc_tag(), self._rng.randbytes(CELL_SECRET_BYTES))
            handle = Handle(self._next_handle)
            self._next_handle += 1
            self._cells[handle] = cell
            self._place(cell, value)
            if self._check(handle) != value:
                raise TamperDetected(handle)
            self._journal[handle] = _JournalEntry(value, self._journal_mac(handle, value))
            return handle

    def read_verified(self, handle: Handle) -> bytes:
        with self._lock:
            value = self._check(handle)
            if value is None:
                raise TamperDetected(handle)
            return value

    def audit_all(self) -> list[tuple[Handle, CellStatus]]:
        with self._lock:
            report = []
            for handle in sorted(self._cells):
                status = CellStatus.OK if self._check(handle) is not None else CellStatus.TAMPERED
                if status is CellStatus.TAMPERED and self._log:
                    self._log("MemIntegrity", f"cell {handle} failed integrity audit")
                report.append((handle, status))
            return report

    def restore(self, handle: Handle) -> None:
        """Rewrite a cell from the journal with a fresh secret and tag slot."""
        with self._lock:
            if handle not in self._cells:
                raise UnknownHandle(handle)
            entry = self._journal.get(handle)
            if entry is None:
                raise JournalMissing(handle)
            if not ct_equal(self._journal_mac(handle, entry.value), entry.mac):
                if self._log:
                    self._log("MemIntegrity", f"cell {handle} journal corrupt, restore impossible")
                raise JournalCorrupt(handle)
            cell = self._cells[handle]
            old_tag = cell.tag_addr
            cell.tag_addr = self._alloc_tag() if self._free_tags else old_tag
            if cell.tag_addr != old_tag:
                self.memory[old_tag:old_tag + TAG_BYTES] = bytes(TAG_BYTES)
                self._free_tag(old_tag)
            cell.t = self._rng.randbytes(CELL_SECRET_BYTES)
            self._place(cell, entry.value)
            if self._log:
                self._log("MemIntegrity", f"cell {handle} restored from journal")

    def invalidate(self, handle: Handle) -> None:
        """Drop a cell: wipe its bytes and forget its journal entry."""
        with self._lock:
            cell = self._cells.pop(handle, None)
            if cell is None:
                raise UnknownHandle(handle)
            self._journal.pop(handle, None)
            self.memory[cell.value_addr:cell.value_addr + cell.value_len] = bytes(cell.value_len)
            self.memory[cell.tag_addr:cell.tag_addr + TAG_BYTES] = bytes(TAG_BYTES)
            self._free_value(cell.value_addr, cell.value_len)
            self._free_tag(cell.tag_addr)

    def adversary_poke(self, offset: int, new_byte: int) -> None:
        """Test hook: overwrite one raw arena byte, bypassing every check."""
        if not 0 <= offset < len(self.memory):
            raise IndexError("offset outside arena")
        with self._lock:
            self.memory[offset] = new_byte & 0xFF

    def _owned_ranges(self) -> dict[Handle, tuple[range, range]]:
        """Test support: byte ranges owned by each cell (value, tag)."""
        return {
            h: (range(c.value_addr, c.value_addr + c.value_len), range(c.tag_addr, c.tag_addr + TAG_BYTES))
            for h, c in self._cells.items()
        }
