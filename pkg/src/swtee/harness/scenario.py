"""Deterministic simulation and the line-oriented scenario language.

Script lines are ``<time_ms> <actor> <action> [args]``; ``#`` starts a
comment. Events run in time order (file order breaks ties) on a clock that
advances in fixed steps. See docs/scenarios.md for the full grammar.
"""

from __future__ import annotations

import operator
import random
import shlex
from dataclasses import dataclass, field

from ..agent import Agent, make_app_code
from ..attest import Verdict
from ..errors import ScriptError, SwteeError
from ..gateway import Category, Gateway, GatewayConfig, Logger, NodeStatus
from ..gateway.logger import verify_entries
from ..wire import HEADER_BYTES, TAG_BYTES, MsgType, decode_frame
from .simlink import GATEWAY, Action, JournalEntry, Rule, SimLink

STEP_MS = 100
APP_STEP_MS = 1_000


def node_id_for(name: str) -> bytes:
    raw = name.encode()
    if not 0 < len(raw) <= 16:
        raise ValueError("node names must be 1 to 16 bytes")
    return raw.ljust(16, b"\x00")


class Simulation:
    """Gateway plus agents on a simulated link, all driven by one seed."""

    def __init__(
        self,
        seed: int = 0,
        config: GatewayConfig | None = None,
        *,
        step_ms: int = STEP_MS,
        app_step_ms: int = APP_STEP_MS,
    ):
        self.rng = random.Random(seed)
        self.config = config or GatewayConfig(arena_size_bytes=256 * 1024)
        self.alg = self.config.alg_id
        self.step_ms = step_ms
        self.app_step_ms = app_step_ms
        self.gateway = Gateway(self.config, rng=random.Random(self.rng.getrandbits(64)), logger=Logger())
        self.link = SimLink(random.Random(self.rng.getrandbits(64)), step_ms)
        self.adv_rng = random.Random(self.rng.getrandbits(64))
        self.agents: dict[str, Agent] = {}
        self.app_steps: dict[str, int] = {}
        self.now = 0
        self.adversarial_delivered = 0
        self.adversarial_accepted: list[str] = []
        self.adversarial_unnoticed: list[str] = []  # rejected, but neither logged nor counted
        self.update_epochs: dict[str, list[int]] = {}
        self.poked_cells: list[int] = []

    # -- topology ---------------------------------------------------------------

    def agent(self, name: str) -> Agent:
        if name not in self.agents:
            nid = node_id_for(name)
            self.agents[name] = Agent(nid, alg=self.alg, rng=random.Random(self.rng.getrandbits(64)))
            self.app_steps[name] = 0
            self.link.node_ids[name] = nid
        return self.agents[name]

    def node_record(self, name: str):
        return self.gateway.nodes.get(node_id_for(name))

    def _name_of(self, node_id: bytes) -> str:
        for name, a in self.agents.items():
            if a.node_id == node_id:
                return name
        return node_id.hex()

    def join(self, name: str) -> None:
        self.link.send(name, GATEWAY, self.agent(name).hello(), self.now)
        self.flush()

    # -- message pump -----------------------------------------------------------

    def _collect_gateway(self) -> None:
        for node_id, raw in self.gateway.drain():
            name = self._name_of(node_id)
            if raw[5] == MsgType.APP_UPDATE:
                self.update_epochs.setdefault(name, []).append(decode_frame(raw).epoch)
            self.link.send(GATEWAY, name, raw, self.now)

    def flush(self, limit: int = 100_000) -> None:
        for _ in range(limit):
            self._collect_gateway()
            batch = self.link.due(self.now)
            if not batch:
                return
            for pkt in batch:
                self._deliver(pkt)
        raise RuntimeError("message pump did not settle")

    def _deliver(self, pkt) -> None:
        if pkt.dst == GATEWAY:
            anomalies = len(self.gateway.log.by_category(Category.NETWORK_ANOMALY))
            accepted = self.gateway.receive(pkt.raw, self.now)
            noticed = len(self.gateway.log.by_category(Category.NETWORK_ANOMALY)) > anomalies
        else:
            agent = self.agents.get(pkt.dst)
            if agent is None:
                return
            before, drops = agent.accepted_frames, agent.drops
            for reply in agent.handle_frame(pkt.raw, self.now):
                self.link.send(pkt.dst, GATEWAY, reply, self.now)
            accepted = agent.accepted_frames > before
            noticed = agent.drops > drops or agent.silent
        if pkt.adversarial:
            self.adversarial_delivered += 1
            what = f"{self.now} {pkt.src}->{pkt.dst} {pkt.note}"
            if accepted:
                self.adversarial_accepted.append(what)
            elif not noticed:
                self.adversarial_unnoticed.append(what)
        self._collect_gateway()

    def step(self) -> None:
        self.now += self.step_ms
        self.gateway.tick(self.now)
        self.flush()
        if self.now % self.app_step_ms == 0:
            for name in sorted(self.agents):
                raw = self.agents[name].run_app_step(self.app_steps[name])
                self.app_steps[name] += 1
                if raw is not None:
                    self.link.send(name, GATEWAY, raw, self.now)
            self.flush()

    def run_until(self, t: int) -> None:
        while self.now + self.step_ms <= t:
            self.step()

    # -- adversary helpers --------------------------------------------------------

    def forge(self, name: str, msg_type: MsgType, body_len: int) -> bytes:
        """A well-formed frame for ``name`` at its current epoch, without the key."""
        rec = self.node_record(name)
        epoch = rec.channel.epoch if rec else 0
        seq = self.adv_rng.randrange(1 << 20)
        header = (
            b"SB4N" + bytes([1, msg_type]) + node_id_for(name) + epoch.to_bytes(4, "big")
            + seq.to_bytes(8, "big") + body_len.to_bytes(4, "big")
        )
        assert len(header) == HEADER_BYTES
        return header + self.adv_rng.randbytes(body_len + TAG_BYTES)

    def poke_cells(self, n: int) -> list[int]:
        """Flip one random byte in each of ``n`` random live cells (value or tag)."""
        ranges = self.gateway.memory._owned_ranges()
        chosen = self.adv_rng.sample(sorted(ranges), min(n, len(ranges)))
        for h in chosen:
            value, tag = ranges[h]
            region = value if self.adv_rng.random() < 0.5 else tag
            off = self.adv_rng.choice(region)
            mem = self.gateway.memory
            mem.adversary_poke(off, mem.memory[off] ^ self.adv_rng.randrange(1, 256))
            self.link.journal.append(JournalEntry(self.now, "poke", f"cell {h} byte {off}"))
        self.poked_cells.extend(chosen)
        return chosen

    # -- reporting ----------------------------------------------------------------

    def event_log(self) -> list[str]:
        lines = [e.render() for e in self.gateway.log.entries]
        lines += [j.render() for j in self.link.journal]
        lines += [f"{t:>9d} verdict {self._name_of(n)} {v.value}" for t, n, v in self.gateway.verdicts]
        return lines


# -- script parsing -------------------------------------------------------------

_OPS = {"==": operator.eq, ">=": operator.ge, "<=": operator.le, "!=": operator.ne, ">": operator.gt, "<": operator.lt}


def parse_cmp(text: str) -> tuple[str, int]:
    for sym in ("==", ">=", "<=", "!=", ">", "<"):
        if text.startswith(sym):
            return sym, int(text[len(sym):])
    return "==", int(text)


@dataclass
class Event:
    time: int
    actor: str
    action: str
    args: list[str]
    line: int

    def kv(self) -> dict[str, str]:
        out = {}
        for a in self.args:
            if "=" in a and not a.startswith(("=", ">", "<", "!")):
                k, v = a.split("=", 1)
                out[k] = v
        return out

    def positional(self) -> list[str]:
        return [a for a in self.args if not ("=" in a and not a.startswith(("=", ">", "<", "!")))]


def parse_script(text: str) -> list[Event]:
    events = []
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            parts = shlex.split(line)
        except ValueError as exc:
            raise ScriptError(str(exc), no) from None
        if len(parts) < 3:
            raise ScriptError("expected '<time_ms> <actor> <action> [args]'", no)
        try:
            t = int(parts[0])
        except ValueError:
            raise ScriptError(f"bad time {parts[0]!r}", no) from None
        if t < 0:
            raise ScriptError("time must be non-negative", no)
        events.append(Event(t, parts[1], parts[2], parts[3:], no))
    events.sort(key=lambda e: (e.time, e.line))
    for e in events:
        _validate(e)
    return events


_NODE_ACTIONS = {"join", "rejoin", "silence", "unsilence", "tamper-code", "tamper-image"}
_GATEWAY_ACTIONS = {"deploy", "attest", "renew", "audit"}
_ADV_ACTIONS = {"rule", "clear", "replay", "inject", "poke"}
_EXPECTS = {
    "status", "verdicts", "forced-updates", "log", "log-match", "cells", "adversarial-accepted",
    "epoch", "agent-drops", "app-version", "updates", "live-cells",
}


def _validate(e: Event) -> None:
    if e.actor == "gateway":
        ok = e.action in _GATEWAY_ACTIONS
    elif e.actor == "adv":
        ok = e.action in _ADV_ACTIONS
    elif e.actor == "expect":
        ok = e.action in _EXPECTS
    elif e.actor == "sim":
        ok = e.action == "end"
    else:
        ok = e.action in _NODE_ACTIONS
        try:
            node_id_for(e.actor)
        except ValueError as exc:
            raise ScriptError(str(exc), e.line) from None
    if not ok:
        raise ScriptError(f"unknown action {e.action!r} for actor {e.actor!r}", e.line)


# -- execution --------------------------------------------------------------------


@dataclass
class Check:
    line: int | None
    description: str
    passed: bool
    detail: str = ""

    def render(self) -> str:
        where = f"line {self.line}: " if self.line else ""
        return f"[{'PASS' if self.passed else 'FAIL'}] {where}{self.description}{' (' + self.detail + ')' if self.detail else ''}"


@dataclass
class ScenarioReport:
    events: list[str]
    checks: list[Check] = field(default_factory=list)
    simulation: Simulation | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def render(self) -> str:
        return "\n".join(c.render() for c in self.checks)


def _int(e: Event, value: str) -> int:
    try:
        return int(value, 0)
    except ValueError:
        raise ScriptError(f"expected an integer, got {value!r}", e.line) from None


def _msg_type(e: Event, name: str | None) -> MsgType | None:
    if name is None or name == "*":
        return None
    try:
        return MsgType[name.upper()]
    except KeyError:
        raise ScriptError(f"unknown message type {name!r}", e.line) from None


def _execute(sim: Simulation, e: Event) -> None:
    kv, pos = e.kv(), e.positional()
    if e.actor == "sim":
        return
    if e.actor == "gateway":
        if e.action == "audit":
            sim.gateway.next_audit_at = sim.now
            sim.gateway.tick(sim.now)
            return
        if not pos:
            raise ScriptError(f"{e.action} needs a node name", e.line)
        nid = node_id_for(pos[0])
        try:
            if e.action == "deploy":
                code = make_app_code(
                    _int(e, kv.get("period", "1")), _int(e, kv.get("len", "16")),
                    kv.get("seed", pos[0]).encode(), _int(e, kv.get("size", "256")),
                )
                sim.gateway.deploy(nid, code, sim.now)
            elif e.action == "attest":
                sim.gateway.attest(nid, sim.now)
            elif e.action == "renew":
                sim.gateway.renew(nid, sim.now)
        except (SwteeError, ValueError) as exc:
            raise ScriptError(f"gateway {e.action} failed: {exc}", e.line) from None
        return
    if e.actor == "adv":
        if e.action == "clear":
            sim.link.clear_rules()
        elif e.action == "rule":
            if not pos:
                raise ScriptError("rule needs an action", e.line)
            try:
                action = Action(pos[0])
            except ValueError:
                raise ScriptError(f"unknown adversary action {pos[0]!r}", e.line) from None
            if action in (Action.INJECT,):
                raise ScriptError("inject is a one-shot command, not a rule", e.line)
            sim.link.add_rule(Rule(
                action,
                node=kv.get("node"),
                direction=kv.get("dir"),
                msg_type=_msg_type(e, kv.get("type")),
                count=_int(e, kv["count"]) if "count" in kv else None,
                offset=_int(e, kv.get("offset", "0")),
                xor=_int(e, kv.get("xor", "1")),
                steps=_int(e, kv.get("steps", "1")),
                target=kv.get("target"),
            ))
        elif e.action == "replay":
            sim.link.replay(
                sim.now, node=kv.get("node"), msg_type=_msg_type(e, kv.get("type")),
                direction=kv.get("dir"), back=_int(e, kv.get("back", "1")),
            )
        elif e.action == "inject":
            dst = kv.get("to", GATEWAY)
            if "hex" in kv:
                raw = bytes.fromhex(kv["hex"])
            else:
                node = kv.get("node", dst)
                raw = sim.forge(node, _msg_type(e, kv.get("type", "DATA")), _int(e, kv.get("len", "16")))
            sim.link.inject(dst, raw, sim.now)
        elif e.action == "poke":
            sim.poke_cells(_int(e, kv.get("cells", "1")))
        sim.flush()
        return
    # node actor
    agent = sim.agent(e.actor)
    if e.action in ("join", "rejoin"):
        agent.silent = False
        sim.join(e.actor)
    elif e.action == "silence":
        agent.silent = True
    elif e.action == "unsilence":
        agent.silent = False
    elif e.action in ("tamper-code", "tamper-image"):
        off = _int(e, pos[0]) if pos else 100
        xor = _int(e, pos[1]) if len(pos) > 1 else 1
        try:
            (agent.tamper_code if e.action == "tamper-code" else agent.tamper_image)(off, xor)
        except (SwteeError, ValueError) as exc:
            raise ScriptError(f"{e.action} failed: {exc}", e.line) from None


def _observe(sim: Simulation, e: Event) -> tuple[object, str]:
    """Returns (observed value, description) for an expectation."""
    pos = e.positional()
    need = {"status": 2, "verdicts": 3, "forced-updates": 2, "log": 2, "log-match": 3, "cells": 2,
            "adversarial-accepted": 1, "epoch": 2, "agent-drops": 2, "app-version": 2, "updates": 2,
            "live-cells": 1}[e.action]
    if len(pos) < need:
        raise ScriptError(f"expect {e.action} needs {need} arguments", e.line)
    gw = sim.gateway
    if e.action == "adversarial-accepted":
        return len(sim.adversarial_accepted), "adversarial frames accepted"
    if e.action == "live-cells":
        return len(gw.memory), "live cells"
    if e.action in ("log", "log-match"):
        try:
            cat = Category.from_label(pos[0])
        except ValueError as exc:
            raise ScriptError(str(exc), e.line) from None
        entries = gw.log.by_category(cat)
        if e.action == "log-match":
            entries = [x for x in entries if pos[1] in x.detail]
            return len(entries), f"{pos[0]} entries containing {pos[1]!r}"
        return len(entries), f"{pos[0]} entries"
    name = pos[0]
    rec = sim.node_record(name)
    if e.action == "status":
        return (rec.status.value if rec else "Unregistered"), f"status of {name}"
    if e.action == "verdicts":
        try:
            want = Verdict(pos[1])
        except ValueError:
            raise ScriptError(f"unknown verdict {pos[1]!r}", e.line) from None
        nid = node_id_for(name)
        return sum(1 for _, n, v in gw.verdicts if n == nid and v is want), f"{pos[1]} verdicts for {name}"
    if e.action == "agent-drops":
        return sim.agent(name).drops, f"frames dropped by {name}"
    if e.action == "updates":
        return len(sim.update_epochs.get(name, [])), f"app updates sent to {name}"
    if rec is None:
        return None, f"{e.action} of unregistered {name}"
    if e.action == "forced-updates":
        return rec.forced_updates, f"forced updates of {name}"
    if e.action == "cells":
        return len(rec.cells), f"live cells of {name}"
    if e.action == "epoch":
        return rec.channel.epoch, f"epoch of {name}"
    return rec.app_version, f"app version of {name}"


def _check(sim: Simulation, e: Event) -> Check:
    observed, desc = _observe(sim, e)
    pos = e.positional()
    expected = pos[-1]
    if e.action == "status":
        try:
            NodeStatus(expected)
        except ValueError:
            if expected != "Unregistered":
                raise ScriptError(f"unknown status {expected!r}", e.line) from None
        return Check(e.line, f"{desc} is {expected}", observed == expected, f"observed {observed}")
    try:
        sym, n = parse_cmp(expected)
    except ValueError:
        raise ScriptError(f"bad comparison {expected!r}", e.line) from None
    ok = observed is not None and _OPS[sym](observed, n)
    return Check(e.line, f"{desc} {sym} {n}", ok, f"observed {observed}")


def builtin_checks(sim: Simulation) -> list[Check]:
    gw = sim.gateway
    lost_with_cells = [r.label for r in gw.nodes.values() if r.status is NodeStatus.LOST and r.cells]
    owned = {h for r in gw.nodes.values() for h in r.cells}
    monotone = all(all(a < b for a, b in zip(ep, ep[1:])) for ep in sim.update_epochs.values())
    chain = verify_entries(gw.log.entries)
    return [
        Check(None, "no adversarial frame was accepted", not sim.adversarial_accepted,
              "; ".join(sim.adversarial_accepted) or f"{sim.adversarial_delivered} adversarial deliveries"),
        Check(None, "every rejected adversarial frame was logged or counted as a drop", not sim.adversarial_unnoticed,
              "; ".join(sim.adversarial_unnoticed[:5])),
        Check(None, "lost nodes hold no live cells", not lost_with_cells, ", ".join(lost_with_cells)),
        Check(None, "every live cell belongs to a node", set(gw.memory.live_handles()) == owned),
        Check(None, "app updates sealed under strictly increasing epochs", monotone),
        Check(None, "log chain verifies", bool(chain)),
    ]


def run_scenario(script: str, seed: int = 0, config: GatewayConfig | None = None) -> ScenarioReport:
    events = parse_script(script)
    sim = Simulation(seed, config)
    end = max((e.time for e in events), default=0)
    checks: list[Check] = []
    for e in events:
        sim.run_until(e.time)
        if e.actor == "expect":
            checks.append(_check(sim, e))
        else:
            _execute(sim, e)
    sim.run_until(end)
    checks += builtin_checks(sim)
    return ScenarioReport(sim.event_log(), checks, sim)

