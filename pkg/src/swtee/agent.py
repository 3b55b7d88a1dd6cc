"""Node-side agent.

Holds the application image sealed at rest, decrypts it only inside a
single call, answers attestation challenges over the same plaintext buffer
it would execute, and runs a deterministic simulated app.
"""

from __future__ import annotations

import random
import secrets
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from .appimage import AppImage, open_image, seal_image, wipe
from .attest import CHALLENGE_BYTES, expected_digest
from .crypto import AlgId, xof_expand
from .errors import AuthFailure, MalformedFrame, SwteeError
from .keymgr import (
    DhKeyPair, Keystore, SessionKey, dh_keygen, dh_shared, renewal_complete, renewal_initiate,
    seal_keystore, session_from_shared,
)
from .wire import Channel, Direction, MsgType, decode_frame, encode_frame, open_hello, seal_hello

MANIFEST_BYTES = 8


@dataclass(frozen=True)
class SimApp:
    """Manifest: period u32 | payload_len u32 | seed. Output depends on every seed byte."""

    period: int
    payload_len: int
    seed: bytes

    @classmethod
    def parse(cls, code: bytes | bytearray) -> "SimApp":
        if len(code) < MANIFEST_BYTES:
            raise ValueError("code too short for an app manifest")
        return cls(int.from_bytes(code[0:4], "big"), int.from_bytes(code[4:8], "big"), bytes(code[8:]))

    def build(self) -> bytes:
        return self.period.to_bytes(4, "big") + self.payload_len.to_bytes(4, "big") + self.seed

    def output(self, step_index: int) -> bytes | None:
        if self.period == 0 or step_index % self.period:
            return None
        return xof_expand(self.seed + step_index.to_bytes(8, "big"), self.payload_len)


def make_app_code(period: int, payload_len: int, seed: bytes, size: int = 0) -> bytes:
    """Manifest padded with deterministic filler up to ``size`` bytes."""
    code = SimApp(period, payload_len, seed).build()
    if size > len(code):
        code += xof_expand(b"filler" + seed, size - len(code))
    return code


class Agent:
    def __init__(
        self,
        node_id: bytes,
        *,
        alg: AlgId = AlgId.XOODYAK,
        rng: random.Random | None = None,
        device_secret: bytes | None = None,
        keystore_path: str | Path | None = None,
    ):
        if len(node_id) != 16:
            raise ValueError("node_id must be 16 bytes")
        self.node_id = node_id
        self.alg = alg
        self._rng = rng
        self.device_secret = device_secret if device_secret is not None else self.randbytes(16)
        self.keystore_path = Path(keystore_path) if keystore_path else None
        self.identity: DhKeyPair | None = None
        self.channel: Channel | None = None
        self.image: AppImage | None = None
        self.drops = 0
        self.alarms: list[str] = []
        self.acks = 0
        self.accepted_frames = 0
        self.silent = False
        self._code_patch: dict[int, int] = {}

    def randbytes(self, n: int) -> bytes:
        return self._rng.randbytes(n) if self._rng is not None else secrets.token_bytes(n)

    @property
    def app_version(self) -> int:
        return self.image.version if self.image else 0

    @property
    def epoch(self) -> int | None:
        return self.channel.epoch if self.channel else None

    # -- first contact ----------------------------------------------------------

    def hello(self) -> bytes:
        """Forget any previous session and produce a first-contact frame."""
        self.identity = dh_keygen(self.randbytes(32))
        self.channel = None
        self.image = None
        self._code_patch.clear()
        return encode_frame(seal_hello(self.alg, Direction.TO_GATEWAY, self.node_id, self.identity.public))

    def _on_hello(self, frame, now: int) -> list[bytes]:
        if self.identity is None or self.channel is not None:
            raise MalformedFrame("unexpected first-contact reply")
        body = open_hello(self.alg, Direction.TO_AGENT, frame)
        if len(body) != 36:
            raise MalformedFrame("first-contact reply must carry a key and an epoch")
        shared = dh_shared(self.identity.private, body[:32])
        session = session_from_shared(shared, self.node_id, int.from_bytes(body[32:], "big"), now)
        self.channel = Channel(self.node_id, Direction.TO_GATEWAY, session, self.alg)
        self._persist()
        return []

    # -- plaintext handling -----------------------------------------------------

    @contextmanager
    def _plaintext(self) -> Iterator[bytearray]:
        """Decrypted code, with any local tamper patch applied; wiped on exit."""
        if self.image is None or self.channel is None:
            raise AuthFailure("no installed image")
        buf = open_image(self.alg, self.channel.session.image_key, self.image)
        try:
            for off, val in self._code_patch.items():
                if off < len(buf):
                    buf[off] = val
            yield buf
        finally:
            wipe(buf)

    def install_image(self, image: AppImage) -> None:
        if self.channel is None:
            raise AuthFailure("no session")
        buf = open_image(self.alg, self.channel.session.image_key, image)  # raises AuthFailure
        wipe(buf)
        self.image = image
        self._code_patch.clear()
        self._persist()

    def _reseal(self, old: SessionKey, new: SessionKey) -> None:
        if self.image is None:
            return
        buf = open_image(self.alg, old.image_key, self.image)
        try:
            self.image = seal_image(self.alg, new.image_key, self.image.app_id, self.image.version, bytes(buf))
        finally:
            wipe(buf)

    def answer(self, t: bytes) -> bytes:
        with self._plaintext() as code:
            return expected_digest(bytes(code), t)

    def run_app_step(self, step_index: int) -> bytes | None:
        if self.silent or self.channel is None or self.image is None:
            return None
        try:
            with self._plaintext() as code:
                out = SimApp.parse(code).output(step_index)
        except AuthFailure:
            self.alarms.append(f"step {step_index}: stored image failed authentication")
            return None
        except ValueError as exc:
            self.alarms.append(f"step {step_index}: {exc}")
            return None
        if out is None:
            return None
        return encode_frame(self.channel.seal(MsgType.DATA, out))

    # -- frame handling ---------------------------------------------------------

    def handle_frame(self, raw: bytes, now: int = 0) -> list[bytes]:
        """Never raises: anything that fails to authenticate or parse is counted and dropped."""
        if self.silent:
            return []
        try:
            frame = decode_frame(raw)
            if frame.node_id != self.node_id:
                raise AuthFailure("frame for another node")
            if frame.msg_type is MsgType.HELLO:
                replies = self._on_hello(frame, now)
                self.accepted_frames += 1
                return replies
            if self.channel is None:
                raise AuthFailure("no session")
            msg_type, body = self.channel.open(frame, now)
            self.accepted_frames += 1
            return self._dispatch(msg_type, body, now)
        except (SwteeError, ValueError) as exc:
            self.drops += 1
            self.alarms.append(f"dropped frame: {type(exc).__name__}")
            return []

    def _dispatch(self, msg_type: MsgType, body: bytes, now: int) -> list[bytes]:
        ch = self.channel
        if msg_type is MsgType.DH_OFFER:
            eph, offer = renewal_initiate(ch.epoch, self.randbytes(32))
            new = renewal_complete(eph, body, self.node_id, ch.epoch, now)
            reply = encode_frame(ch.seal(MsgType.DH_ACCEPT, offer))
            old = ch.session
            ch.rekey(new, now)
            self._reseal(old, new)
            self._persist()
            return [reply]
        if msg_type is MsgType.ATTEST_CHALLENGE:
            if len(body) != CHALLENGE_BYTES:
                raise MalformedFrame("bad challenge length")
            return [encode_frame(ch.seal(MsgType.ATTEST_RESPONSE, self.answer(body)))]
        if msg_type is MsgType.APP_UPDATE:
            image = AppImage.decode(body)
            self.install_image(image)
            return [encode_frame(ch.seal(MsgType.UPDATE_ACK, image.version.to_bytes(4, "big")))]
        if msg_type is MsgType.ACK:
            self.acks += 1
            return []
        raise MalformedFrame(f"unexpected {msg_type.name}")

    # -- adversary hooks (tests and scenarios) ----------------------------------

    def tamper_code(self, offset: int, xor: int = 0x01) -> None:
        """Model a local code modification: patches every future decryption until reinstall."""
        with self._plaintext() as code:
            off = offset % len(code)
            self._code_patch[off] = code[off] ^ (xor & 0xFF or 1)

    def tamper_image(self, offset: int, xor: int = 0x01) -> None:
        """Flip bits of the sealed image at rest."""
        if self.image is None:
            raise ValueError("no image installed")
        raw = bytearray(self.image.sealed)
        raw[offset % len(raw)] ^= xor & 0xFF or 1
        self.image = AppImage(self.image.app_id, self.image.version, bytes(raw), self.image.tag)

    # -- persistence ------------------------------------------------------------

    def keystore(self) -> Keystore:
        ks = Keystore(self.node_id)
        if self.identity is not None:
            ks.dh_pairs["identity"] = self.identity
        if self.channel is not None:
            ks.sessions["current"] = self.channel.session
        return ks

    def persistent_state(self) -> bytes:
        """Everything the node keeps between operations: sealed keystore and sealed image."""
        blob = seal_keystore(self.keystore(), self.device_secret, self.randbytes(16))
        return blob + (self.image.encode() if self.image else b"")

    def _persist(self) -> None:
        if self.keystore_path is not None:
            self.keystore_path.write_bytes(self.persistent_state())
