"""Challenge-response code attestation.

The verifier sends a fresh 16-byte secret ``t`` over the sealed channel; the
node answers with ``digest(code XOR xof_expand(t, len(code)))`` over the code
it would execute. The verifier recomputes that over its canonical copy.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from enum import Enum
from typing import Callable

from .crypto import ct_equal, digest, xof_expand, xor_bytes
from .errors import ChallengeAlreadyPending, MalformedFrame, NoPendingChallenge, ReplayError
from .wire import Channel, Frame, MsgType

CHALLENGE_BYTES = 16
DEFAULT_TIMEOUT_MS = 5_000
DEFAULT_RETRIES = 2

RandomSource = Callable[[int], bytes]


class Verdict(Enum):
    OK = "Ok"
    FAIL = "Fail"
    LOST = "Lost"


@dataclass
class PendingChallenge:
    node_id: bytes
    t: bytes
    issued_at: int
    deadline: int
    retries_left: int

    def __repr__(self) -> str:
        return f"PendingChallenge(node={self.node_id.hex()}, deadline={self.deadline}, retries_left={self.retries_left})"


def expected_digest(code: bytes, t: bytes) -> bytes:
    if len(code) < 1:
        raise ValueError("code must be non-empty")
    if len(t) != CHALLENGE_BYTES:
        raise ValueError("challenge secret must be 16 bytes")
    return digest(xor_bytes(code, xof_expand(t, len(code))))


def answer_challenge(code: bytes, channel: Channel, frame: Frame, now: int = 0) -> Frame:
    """Open a challenge and seal the matching response. Forged frames raise AuthFailure."""
    if frame.msg_type != MsgType.ATTEST_CHALLENGE:
        raise MalformedFrame("not an attestation challenge")
    _, t = channel.open(frame, now)
    if len(t) != CHALLENGE_BYTES:
        raise MalformedFrame("challenge body must be 16 bytes")
    return channel.seal(MsgType.ATTEST_RESPONSE, expected_digest(code, t))


class AttestationTracker:
    """At most one outstanding challenge per node, with timeout and retries."""

    def __init__(
        self,
        timeout_ms: int = DEFAULT_TIMEOUT_MS,
        retries: int = DEFAULT_RETRIES,
        randbytes: RandomSource = os.urandom,
    ):
        self.timeout_ms = timeout_ms
        self.retries = retries
        self._randbytes = randbytes
        self._pending: dict[bytes, PendingChallenge] = {}
        self._used: set[bytes] = set()

    def pending(self, node_id: bytes) -> PendingChallenge | None:
        return self._pending.get(node_id)

    def _fresh_t(self) -> bytes:
        while True:
            t = self._randbytes(CHALLENGE_BYTES)
            if t not in self._used:
                self._used.add(t)
                return t

    def issue(self, channel: Channel, now: int, retries_left: int | None = None) -> tuple[Frame, PendingChallenge]:
        node_id = channel.node_id
        if node_id in self._pending:
            raise ChallengeAlreadyPending(node_id.hex())
        p = PendingChallenge(
            node_id, self._fresh_t(), now, now + self.timeout_ms,
            self.retries if retries_left is None else retries_left,
        )
        frame = channel.seal(MsgType.ATTEST_CHALLENGE, p.t)
        self._pending[node_id] = p
        return frame, p

    def cancel(self, node_id: bytes) -> PendingChallenge | None:
        return self._pending.pop(node_id, None)

    def verify(self, channel: Channel, frame: Frame, canonical_code: bytes, now: int = 0) -> Verdict:
        """Resolve the node's pending challenge.

        A replayed response resolves to FAIL. Forged or malformed frames
        raise and leave the challenge pending.
        """
        p = self._pending.get(channel.node_id)
        if p is None:
            raise NoPendingChallenge(channel.node_id.hex())
        if frame.msg_type != MsgType.ATTEST_RESPONSE:
            raise MalformedFrame("not an attestation response")
        try:
            _, body = channel.open(frame, now)
        except ReplayError:
            del self._pending[channel.node_id]
            return Verdict.FAIL
        del self._pending[channel.node_id]
        return verify_digest(p, body, canonical_code)

    def expired(self, now: int) -> list[PendingChallenge]:
        return [p for p in self._pending.values() if now > p.deadline]


def verify_digest(pending: PendingChallenge, received: bytes, canonical_code: bytes) -> Verdict:
    ok = ct_equal(received, expected_digest(canonical_code, pending.t))
    return Verdict.OK if ok else Verdict.FAIL
