"""Frame format and the sealed channel between gateway and agents.

Layout (big-endian throughout)::

    magic "SB4N" | version 0x01 | msg_type | node_id[16] | epoch u32 | seq u64
    | body_len u32 | sealed body[body_len] | tag[16]

The 38-byte header is the associated data. Nonces are never random: they are
``direction | msg_type | 00 00 | epoch | seq``, unique per key by construction.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum

from .crypto import TAG_BYTES, AlgId, aead_decrypt, aead_encrypt, xof_expand
from .errors import AuthFailure, EpochMismatch, MalformedFrame, ReplayError, SequenceExhausted
from .keymgr import NODE_ID_BYTES, SessionKey

MAGIC = b"SB4N"
VERSION = 0x01
HEADER_BYTES = 38
FRAME_OVERHEAD = HEADER_BYTES + TAG_BYTES
MAX_BODY = 1 << 24  # sanity bound for stream reads

WINDOW_SIZE = 64
OVERLAP_FRAMES = 8
OVERLAP_MS = 10_000
SEQ_LIMIT = 1 << 64

_HEADER = struct.Struct(">4sBB16sIQI")
assert _HEADER.size == HEADER_BYTES


class MsgType(IntEnum):
    HELLO = 0x01
    DH_OFFER = 0x02
    DH_ACCEPT = 0x03
    ATTEST_CHALLENGE = 0x04
    ATTEST_RESPONSE = 0x05
    APP_UPDATE = 0x06
    UPDATE_ACK = 0x07
    DATA = 0x08
    ACK = 0x09


class Direction(IntEnum):
    TO_AGENT = 0x00
    TO_GATEWAY = 0x01


@dataclass(frozen=True)
class Frame:
    msg_type: MsgType
    node_id: bytes
    epoch: int
    seq: int
    body: bytes  # sealed; same length as the plaintext
    tag: bytes
    version: int = VERSION

    def header(self) -> bytes:
        return _HEADER.pack(MAGIC, self.version, self.msg_type, self.node_id, self.epoch, self.seq, len(self.body))


def _header(msg_type: int, node_id: bytes, epoch: int, seq: int, body_len: int) -> bytes:
    return _HEADER.pack(MAGIC, VERSION, msg_type, node_id, epoch, seq, body_len)


def encode_frame(frame: Frame) -> bytes:
    return frame.header() + frame.body + frame.tag


def _parse_header(data: bytes) -> tuple[MsgType, bytes, int, int, int]:
    magic, version, mtype, node_id, epoch, seq, body_len = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MalformedFrame("bad magic")
    if version != VERSION:
        raise MalformedFrame(f"unsupported version {version}")
    try:
        msg_type = MsgType(mtype)
    except ValueError:
        raise MalformedFrame(f"unknown message type 0x{mtype:02x}") from None
    return msg_type, node_id, epoch, seq, body_len


def decode_frame(data: bytes) -> Frame:
    """Strict decode: the input must be exactly one frame."""
    if len(data) < FRAME_OVERHEAD:
        raise MalformedFrame("truncated frame")
    msg_type, node_id, epoch, seq, body_len = _parse_header(data)
    if len(data) != FRAME_OVERHEAD + body_len:
        raise MalformedFrame("length field disagrees with frame size")
    end = HEADER_BYTES + body_len
    return Frame(msg_type, bytes(node_id), epoch, seq, bytes(data[HEADER_BYTES:end]), bytes(data[end:]))


def frame_length(prefix: bytes) -> int | None:
    """Total length of the frame starting at ``prefix``, or None if the header is incomplete."""
    if len(prefix) < HEADER_BYTES:
        return None
    _, _, _, _, body_len = _parse_header(prefix)
    if body_len > MAX_BODY:
        raise MalformedFrame("body too large")
    return FRAME_OVERHEAD + body_len


class FrameReader:
    """Incremental splitter for a byte stream of concatenated frames."""

    def __init__(self) -> None:
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[bytes]:
        self._buf += data
        out = []
        while True:
            n = frame_length(bytes(self._buf[:HEADER_BYTES]))
            if n is None or len(self._buf) < n:
                return out
            out.append(bytes(self._buf[:n]))
            del self._buf[:n]


def frame_nonce(direction: int, msg_type: int, epoch: int, seq: int) -> bytes:
    return bytes([direction, msg_type, 0, 0]) + epoch.to_bytes(4, "big") + seq.to_bytes(8, "big")


def seal_frame(
    alg: AlgId, key: bytes, direction: int, msg_type: int, node_id: bytes, epoch: int, seq: int, body: bytes
) -> Frame:
    if len(node_id) != NODE_ID_BYTES:
        raise ValueError("node_id must be 16 bytes")
    header = _header(msg_type, node_id, epoch, seq, len(body))
    ct, tag = aead_encrypt(alg, key, frame_nonce(direction, msg_type, epoch, seq), header, body)
    return Frame(MsgType(msg_type), node_id, epoch, seq, ct, tag)


def unseal_frame(alg: AlgId, key: bytes, direction: int, frame: Frame) -> bytes:
    nonce = frame_nonce(direction, frame.msg_type, frame.epoch, frame.seq)
    return aead_decrypt(alg, key, nonce, frame.header(), frame.body, frame.tag)


# -- first contact --------------------------------------------------------
# HELLO frames carry DH public keys before any session exists. They are
# sealed under a key anyone can derive from the node id, so they give
# integrity against line noise and a uniform frame format, not secrecy.


def bootstrap_key(node_id: bytes) -> bytes:
    return xof_expand(b"swtee-bootstrap" + node_id, 16)


def seal_hello(alg: AlgId, direction: int, node_id: bytes, body: bytes) -> Frame:
    return seal_frame(alg, bootstrap_key(node_id), direction, MsgType.HELLO, node_id, 0, 0, body)


def open_hello(alg: AlgId, direction: int, frame: Frame) -> bytes:
    if frame.msg_type != MsgType.HELLO or frame.epoch != 0 or frame.seq != 0:
        raise MalformedFrame("not a first-contact frame")
    return unseal_frame(alg, bootstrap_key(frame.node_id), direction, frame)


# -- replay protection ----------------------------------------------------


class ReplayWindow:
    """Sliding 64-entry bitmap anchored at the highest accepted sequence number."""

    __slots__ = ("top", "bits")

    def __init__(self) -> None:
        self.top = -1
        self.bits = 0  # bit i set <=> seq (top - i) accepted

    def check(self, seq: int) -> None:
        if seq > self.top:
            return
        offset = self.top - seq
        if offset >= WINDOW_SIZE:
            raise ReplayError(f"seq {seq} is behind the window (top {self.top})")
        if self.bits >> offset & 1:
            raise ReplayError(f"seq {seq} already accepted")

    def accept(self, seq: int) -> None:
        self.check(seq)
        if seq > self.top:
            shift = seq - self.top
            self.bits = ((self.bits << shift) | 1) & ((1 << WINDOW_SIZE) - 1) if shift < WINDOW_SIZE else 1
            self.top = seq
        else:
            self.bits |= 1 << (self.top - seq)


@dataclass
class _EpochState:
    session: SessionKey
    window: ReplayWindow = field(default_factory=ReplayWindow)


class Channel:
    """One end of a sealed channel for a single node.

    ``direction`` is the direction of frames this end *sends*; received
    frames are expected in the opposite direction. After :meth:`rekey` the
    previous epoch stays open for receiving for a bounded overlap.
    """

    def __init__(
        self,
        node_id: bytes,
        direction: Direction,
        session: SessionKey,
        alg: AlgId = AlgId.XOODYAK,
        *,
        seq_limit: int = SEQ_LIMIT,
    ):
        self.node_id = node_id
        self.direction = Direction(direction)
        self.alg = alg
        self.seq_limit = seq_limit
        self._cur = _EpochState(session)
        self._prev: _EpochState | None = None
        self._prev_budget = 0
        self._prev_deadline = 0
        self.send_seq = 0

    @property
    def session(self) -> SessionKey:
        return self._cur.session

    @property
    def epoch(self) -> int:
        return self._cur.session.epoch

    def rekey(self, session: SessionKey, now: int) -> None:
        if session.epoch <= self.epoch:
            raise ValueError("epochs must strictly increase")
        self._prev = self._cur
        self._prev_budget = OVERLAP_FRAMES
        self._prev_deadline = now + OVERLAP_MS
        self._cur = _EpochState(session)
        self.send_seq = 0

    def seal(self, msg_type: MsgType, body: bytes) -> Frame:
        if self.send_seq >= self.seq_limit:
            raise SequenceExhausted("sequence space exhausted; renew the session")
        frame = seal_frame(
            self.alg, self._cur.session.key, self.direction, msg_type,
            self.node_id, self.epoch, self.send_seq, body,
        )
        self.send_seq += 1
        return frame

    def open(self, frame: Frame, now: int = 0) -> tuple[MsgType, bytes]:
        if frame.node_id != self.node_id:
            raise AuthFailure("frame addressed to another node")
        use_prev = False
        if frame.epoch == self.epoch:
            state = self._cur
        elif (
            self._prev is not None
            and frame.epoch == self._prev.session.epoch
            and self._prev_budget > 0
            and now <= self._prev_deadline
        ):
            state, use_prev = self._prev, True
        else:
            raise EpochMismatch(f"frame epoch {frame.epoch}, channel epoch {self.epoch}")
        state.window.check(frame.seq)
        body = unseal_frame(self.alg, state.session.key, 1 - self.direction, frame)
        state.window.accept(frame.seq)
        if use_prev:
            self._prev_budget -= 1
        return frame.msg_type, body
