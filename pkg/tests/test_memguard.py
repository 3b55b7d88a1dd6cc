import random

import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.stateful import RuleBasedStateMachine, invariant, precondition, rule

from swtee.crypto import mac, xof_expand, xor_bytes
from swtee.errors import ArenaFull, JournalCorrupt, TamperDetected, UnknownHandle
from swtee.memguard import CellStatus, ProtectedMemory

KEY = bytes(range(16))


def arena(size=4096, seed=0, log=None):
    return ProtectedMemory(KEY, size, rng=random.Random(seed), log=log)


def owned_bytes(mem):
    out = {}
    for h, (vr, tr) in mem._owned_ranges().items():
        for i in (*vr, *tr):
            out[i] = h
    return out


class TestBasics:
    def test_write_read(self):
        mem = arena()
        h = mem.write_protected(b"temperature=21.5")
        assert mem.read_verified(h) == b"temperature=21.5"

    def test_tag_construction(self):
        mem = arena()
        h = mem.write_protected(b"abc")
        cell = mem._cells[h]
        expected = mac(KEY, xor_bytes(b"abc", xof_expand(cell.t, 3)))
        assert bytes(mem.memory[cell.tag_addr:cell.tag_addr + 16]) == expected

    def test_tags_in_separate_region(self):
        mem = arena(size=4096)
        for i in range(20):
            mem.write_protected(bytes([i]) * 10)
        for vr, tr in mem._owned_ranges().values():
            assert vr.stop <= 4096 - 512 <= tr.start

    def test_equal_values_get_distinct_tags(self):
        mem = arena()
        a, b = mem.write_protected(b"same"), mem.write_protected(b"same")
        ta, tb = mem._cells[a].tag_addr, mem._cells[b].tag_addr
        assert mem.memory[ta:ta + 16] != mem.memory[tb:tb + 16]

    def test_empty_value_rejected(self):
        with pytest.raises(ValueError):
            arena().write_protected(b"")

    def test_unknown_handle(self):
        mem = arena()
        with pytest.raises(UnknownHandle):
            mem.read_verified(99)

    def test_arena_full(self):
        mem = arena(size=256)
        with pytest.raises(ArenaFull):
            mem.write_protected(bytes(300))
        # 256/8 = 32 bytes of tag region: two slots
        mem.write_protected(b"a")
        mem.write_protected(b"b")
        with pytest.raises(ArenaFull):
            mem.write_protected(b"c")

    def test_too_small(self):
        with pytest.raises(ValueError):
            ProtectedMemory(KEY, 64)


class TestTamper:
    def test_value_poke_detected_and_restored(self):
        lines = []
        mem = arena(log=lambda cat, msg: lines.append((cat, msg)))
        h = mem.write_protected(b"reading")
        addr = mem._cells[h].value_addr
        mem.adversary_poke(addr, mem.memory[addr] ^ 0xFF)
        with pytest.raises(TamperDetected):
            mem.read_verified(h)
        assert mem.audit_all() == [(h, CellStatus.TAMPERED)]
        mem.restore(h)
        assert mem.read_verified(h) == b"reading"
        assert lines == [("MemIntegrity", f"cell {h} failed integrity audit"),
                         ("MemIntegrity", f"cell {h} restored from journal")]

    def test_tag_poke_detected(self):
        mem = arena()
        h = mem.write_protected(b"x")
        tag = mem._cells[h].tag_addr
        mem.adversary_poke(tag + 5, mem.memory[tag + 5] ^ 1)
        assert mem.audit_all() == [(h, CellStatus.TAMPERED)]

    def test_restore_moves_tag_and_refreshes_secret(self):
        mem = arena()
        h = mem.write_protected(b"value")
        old = (mem._cells[h].tag_addr, mem._cells[h].t)
        mem.restore(h)
        assert (mem._cells[h].tag_addr, mem._cells[h].t) != old
        assert mem.read_verified(h) == b"value"

    def test_corrupt_journal_refuses_restore(self):
        mem = arena()
        h = mem.write_protected(b"value")
        mem._journal[h].value = b"evil!"
        with pytest.raises(JournalCorrupt):
            mem.restore(h)

    def test_poke_bounds(self):
        with pytest.raises(IndexError):
            arena().adversary_poke(4096, 0)

    @given(seed=st.integers(0, 2**32), pokes=st.lists(st.tuples(st.integers(0, 4095), st.integers(1, 255)),
                                                       min_size=1, max_size=30))
    def test_audit_flags_exactly_the_touched_cells(self, seed, pokes):
        rng = random.Random(seed)
        mem = arena(seed=seed)
        for _ in range(12):
            mem.write_protected(rng.randbytes(rng.randint(1, 40)))
        owner = owned_bytes(mem)
        original = bytes(mem.memory)
        for off, xor in pokes:
            mem.adversary_poke(off, mem.memory[off] ^ xor)
        changed = {i for i in range(mem.size) if mem.memory[i] != original[i]}
        touched = {owner[i] for i in changed if i in owner}
        flagged = {h for h, s in mem.audit_all() if s is CellStatus.TAMPERED}
        assert flagged == touched
        for h in flagged:
            mem.restore(h)
        assert all(s is CellStatus.OK for _, s in mem.audit_all())


class TestLifecycle:
    def test_invalidate_wipes_and_frees(self):
        mem = arena()
        free0, slots0 = mem.free_value_bytes(), mem.free_tag_slots()
        h = mem.write_protected(b"secret-bytes")
        vr, tr = mem._owned_ranges()[h]
        mem.invalidate(h)
        assert all(mem.memory[i] == 0 for i in (*vr, *tr))
        assert (mem.free_value_bytes(), mem.free_tag_slots()) == (free0, slots0)
        with pytest.raises(UnknownHandle):
            mem.read_verified(h)
        with pytest.raises(UnknownHandle):
            mem.invalidate(h)

    def test_free_extents_coalesce(self):
        mem = arena(size=1024)
        hs = [mem.write_protected(bytes(100)) for _ in range(8)]
        for h in hs[::2] + hs[1::2]:
            mem.invalidate(h)
        assert mem._free_extents == [(0, 1024 - 128)]
        mem.write_protected(bytes(800))


class ArenaModel(RuleBasedStateMachine):
    """Random interleavings of writes, frees and audits against a dict model."""

    def __init__(self):
        super().__init__()
        self.mem = arena(size=2048, seed=7)
        self.model: dict[int, bytes] = {}

    @rule(value=st.binary(min_size=1, max_size=64))
    def write(self, value):
        try:
            h = self.mem.write_protected(value)
        except ArenaFull:
            return
        self.model[h] = value

    @precondition(lambda self: self.model)
    @rule(data=st.data())
    def free(self, data):
        h = data.draw(st.sampled_from(sorted(self.model)))
        self.mem.invalidate(h)
        del self.model[h]

    @invariant()
    def contents_match(self):
        assert self.mem.live_handles() == sorted(self.model)
        for h, v in self.model.items():
            assert self.mem.read_verified(h) == v

    @invariant()
    def no_overlap_and_accounting(self):
        seen = set()
        for vr, tr in self.mem._owned_ranges().values():
            for r in (vr, tr):
                assert seen.isdisjoint(r)
                seen.update(r)
        used = sum(len(v) for v in self.model.values())
        assert self.mem.free_value_bytes() + used == 2048 - 256
        assert self.mem.free_tag_slots() + len(self.model) == 16


TestArenaModel = ArenaModel.TestCase
