"""Key lifecycle: X25519 session establishment and renewal, derivation, sealed keystore."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from .crypto import KEY_BYTES, NONCE_BYTES, TAG_BYTES, AlgId, aead_decrypt, aead_encrypt, xof_expand
from .errors import AuthFailure, DegenerateKey, StaleEpoch, UnsealFailure

LABELS = (b"session", b"app-image")
NODE_ID_BYTES = 16

KEYSTORE_MAGIC = b"SB4K"
KEYSTORE_VERSION = 0x01
_KS_HEADER = 4 + 1 + NODE_ID_BYTES + NONCE_BYTES

OFFER_BYTES = 4 + 32


@dataclass(frozen=True)
class DhKeyPair:
    private: bytes
    public: bytes

    def __repr__(self) -> str:
        return f"DhKeyPair(public={self.public.hex()[:16]}...)"


@dataclass(frozen=True)
class SessionKey:
    key: bytes
    epoch: int
    established_at: int
    image_key: bytes = b""

    def __repr__(self) -> str:
        return f"SessionKey(epoch={self.epoch}, established_at={self.established_at})"


def dh_keygen(randomness: bytes) -> DhKeyPair:
    if len(randomness) != 32:
        raise ValueError("DH randomness must be 32 bytes")
    pub = X25519PrivateKey.from_private_bytes(randomness).public_key()
    return DhKeyPair(bytes(randomness), pub.public_bytes(Encoding.Raw, PublicFormat.Raw))


def dh_shared(private: bytes, peer_public: bytes) -> bytes:
    if len(peer_public) != 32:
        raise ValueError("peer public key must be 32 bytes")
    priv = X25519PrivateKey.from_private_bytes(private)
    try:
        shared = priv.exchange(X25519PublicKey.from_public_bytes(peer_public))
    except ValueError as exc:
        # the backend refuses to return an all-zero result
        raise DegenerateKey("low-order peer public key") from exc
    if shared == bytes(32):
        raise DegenerateKey("low-order peer public key")
    return shared


def derive_key(shared: bytes, label: bytes, node_id: bytes, epoch: int) -> bytes:
    if label not in LABELS:
        raise ValueError(f"label must be one of {LABELS}")
    if len(node_id) != NODE_ID_BYTES:
        raise ValueError("node_id must be 16 bytes")
    return xof_expand(shared + label + node_id + epoch.to_bytes(8, "big"), KEY_BYTES)


def session_from_shared(shared: bytes, node_id: bytes, epoch: int, now: int) -> SessionKey:
    return SessionKey(
        key=derive_key(shared, b"session", node_id, epoch),
        epoch=epoch,
        established_at=now,
        image_key=derive_key(shared, b"app-image", node_id, epoch),
    )


# -- renewal --------------------------------------------------------------
# Both parties run the same two calls: initiate() to produce their ephemeral
# share (tagged with the epoch it renews), complete() on the peer's share.


def renewal_initiate(current_epoch: int, randomness: bytes) -> tuple[DhKeyPair, bytes]:
    eph = dh_keygen(randomness)
    return eph, current_epoch.to_bytes(4, "big") + eph.public


def parse_offer(payload: bytes) -> tuple[int, bytes]:
    if len(payload) != OFFER_BYTES:
        raise ValueError("renewal offer must be 36 bytes")
    return int.from_bytes(payload[:4], "big"), payload[4:]


def renewal_complete(
    ephemeral: DhKeyPair, peer_offer: bytes, node_id: bytes, current_epoch: int, now: int
) -> SessionKey:
    epoch, peer_pub = parse_offer(peer_offer)
    if epoch != current_epoch:
        raise StaleEpoch(f"offer for epoch {epoch}, current is {current_epoch}")
    shared = dh_shared(ephemeral.private, peer_pub)
    return session_from_shared(shared, node_id, current_epoch + 1, now)


# -- keystore -------------------------------------------------------------


@dataclass
class Keystore:
    device_id: bytes
    dh_pairs: dict[str, DhKeyPair] = field(default_factory=dict)
    sessions: dict[str, SessionKey] = field(default_factory=dict)
    secrets: dict[str, bytes] = field(default_factory=dict)

    def _to_json(self) -> bytes:
        doc = {
            "dh_pairs": {k: [v.private.hex(), v.public.hex()] for k, v in self.dh_pairs.items()},
            "sessions": {
                k: [v.key.hex(), v.epoch, v.established_at, v.image_key.hex()]
                for k, v in self.sessions.items()
            },
            "secrets": {k: v.hex() for k, v in self.secrets.items()},
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()

    @classmethod
    def _from_json(cls, device_id: bytes, raw: bytes) -> "Keystore":
        doc = json.loads(raw)
        return cls(
            device_id=device_id,
            dh_pairs={k: DhKeyPair(bytes.fromhex(a), bytes.fromhex(b)) for k, (a, b) in doc["dh_pairs"].items()},
            sessions={
                k: SessionKey(bytes.fromhex(key), epoch, at, bytes.fromhex(img))
                for k, (key, epoch, at, img) in doc["sessions"].items()
            },
            secrets={k: bytes.fromhex(v) for k, v in doc["secrets"].items()},
        )


def _sealing_key(device_secret: bytes, device_id: bytes) -> bytes:
    return xof_expand(device_secret + device_id, KEY_BYTES)


def seal_keystore(ks: Keystore, device_secret: bytes, nonce: bytes | None = None) -> bytes:
    """Seal under a key derived from the device secret, with a fresh random nonce."""
    if nonce is None:
        nonce = os.urandom(NONCE_BYTES)
    if len(ks.device_id) != NODE_ID_BYTES:
        raise ValueError("device_id must be 16 bytes")
    header = KEYSTORE_MAGIC + bytes([KEYSTORE_VERSION]) + ks.device_id + nonce
    ct, tag = aead_encrypt(AlgId.XOODYAK, _sealing_key(device_secret, ks.device_id), nonce, header, ks._to_json())
    return header + ct + tag


def unseal_keystore(blob: bytes, device_secret: bytes) -> Keystore:
    if len(blob) < _KS_HEADER + TAG_BYTES:
        raise UnsealFailure("blob too short")
    if blob[:4] != KEYSTORE_MAGIC or blob[4] != KEYSTORE_VERSION:
        raise UnsealFailure("bad magic or version")
    device_id = blob[5:5 + NODE_ID_BYTES]
    nonce = blob[5 + NODE_ID_BYTES:_KS_HEADER]
    body, tag = blob[_KS_HEADER:-TAG_BYTES], blob[-TAG_BYTES:]
    try:
        raw = aead_decrypt(AlgId.XOODYAK, _sealing_key(device_secret, device_id), nonce, blob[:_KS_HEADER], body, tag)
    except AuthFailure as exc:
        raise UnsealFailure("wrong device secret or corrupted keystore") from exc
    return Keystore._from_json(device_id, raw)
