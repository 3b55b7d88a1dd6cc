"""Lightweight permutation-based cryptography.

Xoodyak supplies hashing, the keyed MAC and the XOF; AEAD is available as
either Xoodyak or ISAP-A-128a. All ciphertext bodies have exactly the length
of the plaintext, with the 16-byte tag carried separately.
"""

from __future__ import annotations

import hmac
from enum import IntEnum

from ..errors import AuthFailure
from .isap import isap_encrypt, isap_keystream_xor, isap_tag
from .xoodoo import xoodoo_permute
from .xoodyak import xoodyak_decrypt_unverified, xoodyak_encrypt, xoodyak_hash, xoodyak_mac

KEY_BYTES = 16
NONCE_BYTES = 16
TAG_BYTES = 16
DIGEST_BYTES = 32

__all__ = [
    "AlgId", "AuthFailure", "KEY_BYTES", "NONCE_BYTES", "TAG_BYTES", "DIGEST_BYTES",
    "aead_decrypt", "aead_encrypt", "ct_equal", "digest", "mac", "xof_expand",
    "xor_bytes", "xoodoo_permute",
]


class AlgId(IntEnum):
    XOODYAK = 1
    ISAP = 2  # ISAP-A-128a

    @classmethod
    def parse(cls, name: str) -> "AlgId":
        try:
            return {"xoodyak": cls.XOODYAK, "isap": cls.ISAP}[name.strip().lower()]
        except KeyError:
            raise ValueError(f"unknown algorithm {name!r}") from None

    @property
    def label(self) -> str:
        return self.name.lower()


def ct_equal(a: bytes, b: bytes) -> bool:
    return hmac.compare_digest(a, b)


def xor_bytes(a: bytes, b: bytes) -> bytes:
    if len(a) != len(b):
        raise ValueError("length mismatch")
    n = len(a)
    return (int.from_bytes(a, "little") ^ int.from_bytes(b, "little")).to_bytes(n, "little")


def digest(msg: bytes) -> bytes:
    """32-byte Xoodyak hash. Used for every digest in the system."""
    return xoodyak_hash(msg, DIGEST_BYTES)


def xof_expand(seed: bytes, out_len: int) -> bytes:
    """Xoodyak hash-mode squeeze of ``out_len`` bytes; prefix-consistent."""
    if out_len < 0:
        raise ValueError("out_len must be >= 0")
    if out_len == 0:
        return b""
    return xoodyak_hash(seed, out_len)


def mac(key: bytes, msg: bytes) -> bytes:
    _check_len("key", key, KEY_BYTES)
    return xoodyak_mac(key, msg, TAG_BYTES)


def _check_len(what: str, value: bytes, n: int) -> None:
    if len(value) != n:
        raise ValueError(f"{what} must be {n} bytes, got {len(value)}")


def aead_encrypt(alg: AlgId, key: bytes, nonce: bytes, ad: bytes, pt: bytes) -> tuple[bytes, bytes]:
    """Return ``(ct, tag)`` with ``len(ct) == len(pt)``."""
    _check_len("key", key, KEY_BYTES)
    _check_len("nonce", nonce, NONCE_BYTES)
    if alg is AlgId.XOODYAK:
        return xoodyak_encrypt(key, nonce, ad, pt)
    if alg is AlgId.ISAP:
        return isap_encrypt(key, nonce, ad, pt)
    raise ValueError(f"unsupported algorithm {alg!r}")


def aead_decrypt(alg: AlgId, key: bytes, nonce: bytes, ad: bytes, ct: bytes, tag: bytes) -> bytes:
    """Inverse of :func:`aead_encrypt`; raises :class:`AuthFailure` on any mismatch."""
    _check_len("key", key, KEY_BYTES)
    _check_len("nonce", nonce, NONCE_BYTES)
    if len(tag) != TAG_BYTES:
        raise AuthFailure("bad tag length")
    if alg is AlgId.XOODYAK:
        pt, expected = xoodyak_decrypt_unverified(key, nonce, ad, ct)
        if not ct_equal(expected, tag):
            raise AuthFailure("tag mismatch")
        return pt
    if alg is AlgId.ISAP:
        # ISAP authenticates the ciphertext before any keystream is generated
        if not ct_equal(isap_tag(key, nonce, ad, ct), tag):
            raise AuthFailure("tag mismatch")
        return isap_keystream_xor(key, nonce, ct)
    raise ValueError(f"unsupported algorithm {alg!r}")
