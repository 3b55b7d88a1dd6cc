"""Gateway state machine.

All state changes go through :meth:`Gateway.receive` (frames in) and
:meth:`Gateway.tick` (time passes). Outgoing frames accumulate in
``outbox`` as ``(node_id, raw_bytes)`` pairs; the transport drains it.
Time is an injected integer millisecond clock.
"""

from __future__ import annotations

import os
import random
import secrets
from dataclasses import dataclass, field
from enum import Enum

from ..appimage import seal_image
from ..attest import AttestationTracker, PendingChallenge, Verdict, verify_digest
from ..crypto import KEY_BYTES
from ..errors import (
    DegenerateKey, DuplicateNode, MalformedFrame, NodeNotActive, ReplayError, SwteeError, UnknownNode,
)
from ..keymgr import (
    DhKeyPair, Keystore, dh_keygen, dh_shared, renewal_complete, renewal_initiate, session_from_shared,
)
from ..memguard import CellStatus, Handle, ProtectedMemory
from ..wire import Channel, Direction, Frame, MsgType, decode_frame, encode_frame, open_hello, seal_hello
from .config import GatewayConfig
from .logger import Category, Logger


class NodeStatus(Enum):
    REGISTERED = "Registered"
    ACTIVE = "Active"
    SUSPECT = "Suspect"
    LOST = "Lost"


@dataclass
class _Renewal:
    ephemeral: DhKeyPair
    deadline: int
    purpose: str  # "update" or "scheduled"


@dataclass
class _Update:
    app_id: bytes
    version: int
    code: bytes
    deadline: int | None = None  # set once APP_UPDATE is on the wire


@dataclass
class NodeRecord:
    node_id: bytes
    status: NodeStatus
    channel: Channel
    app_id: bytes = bytes(16)
    app_version: int = 0
    canonical_code: bytes | None = None
    image_epoch: int = -1
    cells: list[Handle] = field(default_factory=list)
    next_attest_at: int | None = None
    last_renewal_at: int = 0
    renewal: _Renewal | None = None
    update: _Update | None = None
    recovering: bool = False
    forced_updates: int = 0

    @property
    def label(self) -> str:
        return node_label(self.node_id)


def node_label(node_id: bytes) -> str:
    text = node_id.rstrip(b"\x00")
    if text and all(32 < c < 127 for c in text):
        return text.decode()
    return node_id.hex()


class Gateway:
    def __init__(
        self,
        config: GatewayConfig | None = None,
        *,
        rng: random.Random | None = None,
        logger: Logger | None = None,
        mem_key: bytes | None = None,
    ):
        self.config = config or GatewayConfig()
        self.alg = self.config.alg_id
        self._rng = rng
        self.log = logger if logger is not None else Logger()
        self.mem_key = mem_key or self.randbytes(KEY_BYTES)
        self.memory = ProtectedMemory(
            self.mem_key, self.config.arena_size_bytes,
            rng=rng or random.SystemRandom(), log=self._mem_log,
        )
        self.tracker = AttestationTracker(self.config.attest_timeout_ms, self.config.attest_retries, self.randbytes)
        self.nodes: dict[bytes, NodeRecord] = {}
        self.outbox: list[tuple[bytes, bytes]] = []
        self.verdicts: list[tuple[int, bytes, Verdict]] = []
        self.rejected_frames = 0
        self.next_audit_at = 0
        self._now = 0

    # -- plumbing -------------------------------------------------------------

    def randbytes(self, n: int) -> bytes:
        return self._rng.randbytes(n) if self._rng is not None else secrets.token_bytes(n)

    def _log(self, category: Category, detail: str) -> None:
        self.log.append(category, detail, self._now)

    def _mem_log(self, _category: str, detail: str) -> None:
        self._log(Category.MEM_INTEGRITY, detail)

    def _anomaly(self, detail: str) -> None:
        self.rejected_frames += 1
        self._log(Category.NETWORK_ANOMALY, detail)

    def _send(self, node: NodeRecord, msg_type: MsgType, body: bytes) -> Frame:
        frame = node.channel.seal(msg_type, body)
        self.outbox.append((node.node_id, encode_frame(frame)))
        return frame

    def drain(self) -> list[tuple[bytes, bytes]]:
        out, self.outbox = self.outbox, []
        return out

    def node(self, node_id: bytes) -> NodeRecord:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNode(node_label(node_id)) from None

    def _set_status(self, node: NodeRecord, status: NodeStatus, why: str) -> None:
        if node.status is not status:
            self._log(Category.NODE_LIFECYCLE, f"node {node.label} {node.status.value} -> {status.value}: {why}")
            node.status = status

    # -- registration ---------------------------------------------------------

    def register_node(self, node_id: bytes, peer_public: bytes, now: int) -> tuple[NodeRecord, bytes]:
        """Trust-on-first-use registration. Returns the record and our DH public key.

        A node that was declared lost may register again; its new session
        starts one epoch above the old one.
        """
        self._now = now
        old = self.nodes.get(node_id)
        if old is not None and old.status is not NodeStatus.LOST:
            raise DuplicateNode(node_label(node_id))
        pair = dh_keygen(self.randbytes(32))
        # epochs keep increasing across re-admission so no (key, epoch) pair repeats
        start_epoch = old.channel.epoch + 1 if old is not None else 0
        session = session_from_shared(dh_shared(pair.private, peer_public), node_id, start_epoch, now)
        node = NodeRecord(node_id, NodeStatus.REGISTERED, Channel(node_id, Direction.TO_AGENT, session, self.alg))
        node.last_renewal_at = now
        if old is not None:
            # re-admission keeps the canonical app so the node can be force-updated
            node.app_id, node.canonical_code, node.app_version = old.app_id, old.canonical_code, old.app_version
            node.image_epoch = -1
        self.nodes[node_id] = node
        self._log(Category.NODE_LIFECYCLE, f"node {node.label} registered{' again' if old else ''} at epoch {start_epoch}")
        return node, pair.public

    def _on_hello(self, frame: Frame, now: int) -> bool:
        try:
            peer_public = open_hello(self.alg, Direction.TO_GATEWAY, frame)
        except SwteeError as exc:
            self._anomaly(f"rejected first-contact frame for {node_label(frame.node_id)}: {type(exc).__name__}")
            return False
        if len(peer_public) != 32:
            self._anomaly(f"first-contact frame for {node_label(frame.node_id)} has bad key length")
            return False
        try:
            node, public = self.register_node(frame.node_id, peer_public, now)
        except (DuplicateNode, DegenerateKey) as exc:
            self._anomaly(f"registration refused for {node_label(frame.node_id)}: {type(exc).__name__}")
            return False
        reply = public + node.channel.epoch.to_bytes(4, "big")
        self.outbox.append((node.node_id, encode_frame(seal_hello(self.alg, Direction.TO_AGENT, node.node_id, reply))))
        if node.canonical_code is not None:
            self.force_update(node.node_id, now, reason="re-admission")
        return True

    # -- key renewal and app updates -------------------------------------------

    def _start_renewal(self, node: NodeRecord, now: int, purpose: str) -> None:
        eph, offer = renewal_initiate(node.channel.epoch, self.randbytes(32))
        node.renewal = _Renewal(eph, now + self.config.update_timeout_ms, purpose)
        self._send(node, MsgType.DH_OFFER, offer)

    def renew(self, node_id: bytes, now: int) -> None:
        self._now = now
        node = self.node(node_id)
        if node.renewal is None and node.update is None and node.status is not NodeStatus.LOST:
            self._start_renewal(node, now, "scheduled")

    def deploy(self, node_id: bytes, code: bytes, now: int, *, app_id: bytes | None = None) -> None:
        """Start a key renewal followed by an APP_UPDATE carrying ``code``."""
        self._now = now
        node = self.node(node_id)
        if node.status is NodeStatus.LOST:
            raise NodeNotActive(f"node {node.label} is lost; it must register again")
        if not code:
            raise ValueError("code must be non-empty")
        if node.renewal is not None or node.update is not None:
            raise ValueError(f"node {node.label} already has an update or renewal in flight")
        if self.tracker.cancel(node_id) is not None:
            self._log(Category.NODE_LIFECYCLE, f"node {node.label} pending challenge cancelled by update")
        node.update = _Update(app_id or node.app_id, node.app_version + 1, bytes(code))
        self._log(Category.NODE_LIFECYCLE, f"node {node.label} update to version {node.update.version} started")
        self._start_renewal(node, now, "update")

    def force_update(self, node_id: bytes, now: int, reason: str = "attestation failure") -> None:
        node = self.node(node_id)
        if node.canonical_code is None:
            raise ValueError(f"node {node.label} has no deployed app")
        node.recovering = True
        node.forced_updates += 1
        self._now = now
        self._log(Category.NODE_LIFECYCLE, f"node {node.label} forced update ({reason})")
        self.deploy(node_id, node.canonical_code, now, app_id=node.app_id)

    def package_app(self, node: NodeRecord, update: _Update):
        """Seal ``update`` under the node's current image key; the caller has just renewed it."""
        if node.channel.epoch <= node.image_epoch:
            raise ValueError("app images must be sealed under a fresh epoch")
        return seal_image(self.alg, node.channel.session.image_key, update.app_id, update.version, update.code)

    def _on_dh_accept(self, node: NodeRecord, body: bytes, now: int) -> None:
        r = node.renewal
        if r is None:
            self._anomaly(f"node {node.label} sent an unsolicited key renewal reply")
            return
        session = renewal_complete(r.ephemeral, body, node.node_id, node.channel.epoch, now)
        node.channel.rekey(session, now)
        node.renewal = None
        node.last_renewal_at = now
        self._log(Category.NODE_LIFECYCLE, f"node {node.label} session renewed to epoch {session.epoch}")
        if r.purpose == "update" and node.update is not None:
            image = self.package_app(node, node.update)
            node.update.deadline = now + self.config.update_timeout_ms
            self._send(node, MsgType.APP_UPDATE, image.encode())
            node.image_epoch = node.channel.epoch

    def _on_update_ack(self, node: NodeRecord, body: bytes, now: int) -> None:
        u = node.update
        if u is None or u.deadline is None or len(body) != 4 or int.from_bytes(body, "big") != u.version:
            self._anomaly(f"node {node.label} sent an unexpected update acknowledgement")
            return
        node.update = None
        node.app_id, node.app_version, node.canonical_code = u.app_id, u.version, u.code
        self._log(Category.NODE_LIFECYCLE, f"node {node.label} installed app version {u.version}")
        self._issue(node, now)

    # -- attestation ----------------------------------------------------------

    def _issue(self, node: NodeRecord, now: int, retries_left: int | None = None) -> PendingChallenge:
        frame, pending = self.tracker.issue(node.channel, now, retries_left)
        self.outbox.append((node.node_id, encode_frame(frame)))
        return pending

    def attest(self, node_id: bytes, now: int) -> None:
        self._now = now
        node = self.node(node_id)
        if node.canonical_code is None:
            raise ValueError(f"node {node.label} has no deployed app")
        self._issue(node, now)

    def _on_response(self, node: NodeRecord, frame: Frame, now: int) -> bool:
        pending = self.tracker.pending(node.node_id)
        if pending is None or node.canonical_code is None:
            node.channel.open(frame, now)  # raises for forged or replayed frames
            self._anomaly(f"node {node.label} sent an unsolicited attestation response")
            return True
        try:
            _, body = node.channel.open(frame, now)
        except ReplayError:
            self.tracker.cancel(node.node_id)
            self._anomaly(f"node {node.label} attestation response replayed")
            self._on_verdict(node, Verdict.FAIL, now)
            return False
        self.tracker.cancel(node.node_id)
        self._on_verdict(node, verify_digest(pending, body, node.canonical_code), now)
        return True

    def _on_verdict(self, node: NodeRecord, verdict: Verdict, now: int) -> None:
        self.verdicts.append((now, node.node_id, verdict))
        self._log(Category.NODE_LIFECYCLE, f"node {node.label} attestation verdict {verdict.value}")
        if verdict is Verdict.OK:
            node.recovering = False
            self._set_status(node, NodeStatus.ACTIVE, "attestation ok")
            node.next_attest_at = now + self.config.attest_interval_ms
        elif verdict is Verdict.FAIL:
            if node.recovering:
                self._mark_lost(node, now, "attestation failed again after forced update")
                return
            self._set_status(node, NodeStatus.SUSPECT, "attestation failed")
            self.force_update(node.node_id, now)
        else:
            self._mark_lost(node, now, "no attestation response")

    def _mark_lost(self, node: NodeRecord, now: int, why: str) -> None:
        self.tracker.cancel(node.node_id)
        node.renewal = node.update = None
        node.next_attest_at = None
        if node.status is not NodeStatus.LOST:
            if not self.verdicts or self.verdicts[-1][1:] != (node.node_id, Verdict.LOST):
                self.verdicts.append((now, node.node_id, Verdict.LOST))
        self._set_status(node, NodeStatus.LOST, why)
        dropped = len(node.cells)
        for h in node.cells:
            self.memory.invalidate(h)
        node.cells.clear()
        self._log(Category.NODE_LIFECYCLE, f"node {node.label} data dropped: {dropped} cells invalidated")

    # -- data -----------------------------------------------------------------

    def ingest_data(self, node_id: bytes, body: bytes) -> Handle:
        node = self.node(node_id)
        if node.status is not NodeStatus.ACTIVE:
            raise NodeNotActive(f"node {node.label} is {node.status.value}")
        handle = self.memory.write_protected(body)
        node.cells.append(handle)
        self._log(
            Category.DATA_PROVENANCE,
            f"node {node.label} handle {handle} app {node.app_id.hex()[:8]} version {node.app_version} bytes {len(body)}",
        )
        return handle

    def cell_owner(self, handle: Handle) -> bytes | None:
        for node in self.nodes.values():
            if handle in node.cells:
                return node.node_id
        return None

    # -- frame input ----------------------------------------------------------

    def receive(self, raw: bytes, now: int) -> bool:
        """Process one incoming frame. Returns True iff it authenticated and was acted upon."""
        self._now = now
        try:
            frame = decode_frame(raw)
        except MalformedFrame as exc:
            self._anomaly(f"malformed frame: {exc}")
            return False
        if frame.msg_type is MsgType.HELLO:
            return self._on_hello(frame, now)
        node = self.nodes.get(frame.node_id)
        if node is None:
            self._anomaly(f"frame from unknown node {node_label(frame.node_id)}")
            return False
        try:
            if frame.msg_type is MsgType.ATTEST_RESPONSE:
                return self._on_response(node, frame, now)
            msg_type, body = node.channel.open(frame, now)
        except SwteeError as exc:
            self._anomaly(f"node {node.label} {frame.msg_type.name} rejected: {type(exc).__name__}")
            return False
        return self._dispatch(node, msg_type, body, frame, now)

    def _dispatch(self, node: NodeRecord, msg_type: MsgType, body: bytes, frame: Frame, now: int) -> bool:
        if node.status is NodeStatus.LOST:
            self._log(Category.NETWORK_ANOMALY, f"node {node.label} is lost; {msg_type.name} dropped")
            return True
        try:
            if msg_type is MsgType.DH_ACCEPT:
                self._on_dh_accept(node, body, now)
            elif msg_type is MsgType.UPDATE_ACK:
                self._on_update_ack(node, body, now)
            elif msg_type is MsgType.DATA:
                try:
                    self.ingest_data(node.node_id, body)
                except (NodeNotActive, ValueError) as exc:
                    self._log(Category.NETWORK_ANOMALY, f"node {node.label} data rejected: {exc}")
                    return True
                self._send(node, MsgType.ACK, frame.seq.to_bytes(8, "big"))
            else:
                self._log(Category.NETWORK_ANOMALY, f"node {node.label} sent unexpected {msg_type.name}")
        except SwteeError as exc:
            self._log(Category.NETWORK_ANOMALY, f"node {node.label} {msg_type.name} failed: {type(exc).__name__}")
        return True

    # -- scheduler ------------------------------------------------------------

    def tick(self, now: int) -> list[str]:
        """Fire everything due at ``now``. Calling again with the same ``now`` does nothing."""
        self._now = now
        actions: list[str] = []
        for node_id in sorted(self.nodes):
            node = self.nodes[node_id]
            if node.status is NodeStatus.LOST:
                continue
            if node.renewal is not None and now > node.renewal.deadline:
                if node.renewal.purpose == "update":
                    self._log(Category.NODE_LIFECYCLE, f"node {node.label} update timed out during key renewal")
                    self._mark_lost(node, now, "update timeout")
                    actions.append(f"lost {node.label}")
                    continue
                node.renewal = None
                node.last_renewal_at = now
                self._log(Category.NETWORK_ANOMALY, f"node {node.label} scheduled key renewal timed out")
            if node.update is not None and node.update.deadline is not None and now > node.update.deadline:
                self._log(Category.NODE_LIFECYCLE, f"node {node.label} update timed out awaiting acknowledgement")
                self._mark_lost(node, now, "update timeout")
                actions.append(f"lost {node.label}")
                continue
            pending = self.tracker.pending(node_id)
            if pending is not None and now > pending.deadline:
                self.tracker.cancel(node_id)
                if pending.retries_left > 0:
                    attempt = self.tracker.retries - pending.retries_left + 1
                    self._log(Category.NODE_LIFECYCLE, f"node {node.label} attestation timed out, retry {attempt}")
                    self._set_status(node, NodeStatus.SUSPECT, "attestation timeout")
                    self._issue(node, now, pending.retries_left - 1)
                    actions.append(f"retry {node.label}")
                else:
                    self._on_verdict(node, Verdict.LOST, now)
                    actions.append(f"lost {node.label}")
                continue
            busy = pending is not None or node.update is not None or node.renewal is not None
            if busy:
                continue
            if node.status is NodeStatus.ACTIVE and node.next_attest_at is not None and now >= node.next_attest_at:
                self._issue(node, now)
                actions.append(f"attest {node.label}")
            elif now - node.last_renewal_at >= self.config.renewal_interval_s * 1000:
                self._start_renewal(node, now, "scheduled")
                actions.append(f"renew {node.label}")
        if now >= self.next_audit_at:
            self.next_audit_at = now + self.config.audit_interval_ms
            for handle, status in self.memory.audit_all():
                if status is CellStatus.TAMPERED:
                    self.memory.restore(handle)
                    actions.append(f"restore {handle}")
        return actions

    # -- persistence ----------------------------------------------------------

    def keystore(self, device_id: bytes = bytes(16)) -> Keystore:
        return Keystore(
            device_id,
            sessions={n.node_id.hex(): n.channel.session for n in self.nodes.values()},
            secrets={"k_mem": self.mem_key},
        )


def load_mem_key(keystore: Keystore | None) -> bytes:
    if keystore is not None and "k_mem" in keystore.secrets:
        return keystore.secrets["k_mem"]
    return os.urandom(KEY_BYTES)
