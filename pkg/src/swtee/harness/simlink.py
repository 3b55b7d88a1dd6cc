"""In-process network with a scriptable adversary.

Every frame sent between the gateway and a node passes through
:meth:`SimLink.send`, where the first matching rule decides its fate.
Everything the adversary does is journaled, and every packet it
fabricates or alters is flagged ``adversarial`` so the simulation can
check that none of them was ever accepted.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum

from ..wire import MsgType

GATEWAY = "gateway"


class Action(Enum):
    DELIVER = "deliver"
    DROP = "drop"
    CORRUPT = "corrupt"
    DUPLICATE = "duplicate"
    REPLAY = "replay"
    INJECT = "inject"
    DELAY = "delay"
    RELAY = "relay"


@dataclass
class Packet:
    src: str
    dst: str
    raw: bytes
    deliver_at: int
    adversarial: bool = False
    note: str = ""
    order: int = 0

    @property
    def msg_type(self) -> MsgType | None:
        try:
            return MsgType(self.raw[5])
        except (IndexError, ValueError):
            return None

    @property
    def node(self) -> str:
        return self.dst if self.src == GATEWAY else self.src

    @property
    def direction(self) -> str:
        return "up" if self.dst == GATEWAY else "down"


@dataclass
class Rule:
    action: Action
    node: str | None = None
    direction: str | None = None  # "up" (to gateway) or "down"
    msg_type: MsgType | None = None
    count: int | None = None  # remaining firings; None means unlimited
    offset: int = 0
    xor: int = 0x01
    steps: int = 1
    target: str | None = None

    def matches(self, pkt: Packet) -> bool:
        if self.count is not None and self.count <= 0:
            return False
        if self.node is not None and pkt.node != self.node:
            return False
        if self.direction is not None and pkt.direction != self.direction:
            return False
        return self.msg_type is None or pkt.msg_type is self.msg_type


@dataclass
class JournalEntry:
    time: int
    action: str
    detail: str

    def render(self) -> str:
        return f"{self.time:>9d} adversary {self.action:<9} {self.detail}"


@dataclass
class SimLink:
    rng: random.Random
    step_ms: int = 100
    rules: list[Rule] = field(default_factory=list)
    journal: list[JournalEntry] = field(default_factory=list)
    captured: list[Packet] = field(default_factory=list)
    node_ids: dict[str, bytes] = field(default_factory=dict)
    _queue: list[Packet] = field(default_factory=list)
    _order: int = 0

    def _enqueue(self, pkt: Packet) -> None:
        self._order += 1
        pkt.order = self._order
        self._queue.append(pkt)

    def _note(self, now: int, action: Action, pkt: Packet, extra: str = "") -> None:
        t = pkt.msg_type.name if pkt.msg_type else "?"
        self.journal.append(JournalEntry(now, action.value, f"{pkt.src}->{pkt.dst} {t} {extra}".rstrip()))

    def add_rule(self, rule: Rule) -> None:
        self.rules.append(rule)

    def clear_rules(self) -> None:
        self.rules.clear()

    def send(self, src: str, dst: str, raw: bytes, now: int) -> None:
        pkt = Packet(src, dst, raw, now)
        self.captured.append(Packet(src, dst, raw, now))
        rule = next((r for r in self.rules if r.matches(pkt)), None)
        if rule is None or rule.action is Action.DELIVER:
            self._enqueue(pkt)
            return
        if rule.count is not None:
            rule.count -= 1
        act = rule.action
        if act is Action.DROP:
            self._note(now, act, pkt)
        elif act is Action.CORRUPT:
            buf = bytearray(raw)
            off = rule.offset % len(buf)
            buf[off] ^= rule.xor & 0xFF or 1
            self._note(now, act, pkt, f"byte {off} ^= 0x{rule.xor & 0xFF or 1:02x}")
            self._enqueue(Packet(src, dst, bytes(buf), now, True, "corrupted"))
        elif act is Action.DUPLICATE:
            self._note(now, act, pkt)
            self._enqueue(pkt)
            self._enqueue(Packet(src, dst, raw, now, True, "duplicate"))
        elif act is Action.DELAY:
            pkt.deliver_at = now + rule.steps * self.step_ms
            self._note(now, act, pkt, f"{rule.steps} steps")
            self._enqueue(pkt)
        elif act is Action.RELAY:
            self._relay(pkt, rule.target, now)
        elif act is Action.REPLAY:
            # deliver the live frame, then replay the previous capture of the same kind
            self._enqueue(pkt)
            self.replay(now, node=pkt.node, msg_type=pkt.msg_type, direction=pkt.direction, back=2)
        else:
            raise ValueError(f"action {act.value} cannot be used as a rule")

    def _relay(self, pkt: Packet, target: str | None, now: int) -> None:
        """Man-in-the-middle: present one node's traffic as another node's."""
        if target is None or target not in self.node_ids:
            raise ValueError("relay needs a known target node")
        if pkt.dst == GATEWAY:
            raw = pkt.raw[:6] + self.node_ids[target] + pkt.raw[22:]
            out = Packet(pkt.src, GATEWAY, raw, now, True, f"relayed as {target}")
        else:
            out = Packet(GATEWAY, target, pkt.raw, now, True, f"relayed from {pkt.dst}")
        self._note(now, Action.RELAY, pkt, f"to {target}")
        self._enqueue(out)

    def replay(
        self,
        now: int,
        *,
        node: str | None = None,
        msg_type: MsgType | None = None,
        direction: str | None = None,
        back: int = 1,
    ) -> bool:
        """Re-send the ``back``-th most recent captured frame matching the filters."""
        probe = Rule(Action.REPLAY, node, direction, msg_type)
        hits = [p for p in self.captured if probe.matches(p)]
        if len(hits) < back:
            self.journal.append(JournalEntry(now, "replay", "nothing captured to replay"))
            return False
        old = hits[-back]
        self._note(now, Action.REPLAY, old, f"captured at {old.deliver_at}")
        self._enqueue(Packet(old.src, old.dst, old.raw, now, True, "replayed"))
        return True

    def inject(self, dst: str, raw: bytes, now: int, src: str = "adversary") -> None:
        pkt = Packet(src, dst, raw, now, True, "injected")
        self._note(now, Action.INJECT, pkt, f"{len(raw)} bytes")
        self._enqueue(pkt)

    def due(self, now: int) -> list[Packet]:
        ready = sorted((p for p in self._queue if p.deliver_at <= now), key=lambda p: (p.deliver_at, p.order))
        if ready:
            taken = {id(p) for p in ready}
            self._queue = [p for p in self._queue if id(p) not in taken]
        return ready

    @property
    def in_flight(self) -> int:
        return len(self._queue)
