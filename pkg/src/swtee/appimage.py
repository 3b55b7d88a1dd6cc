"""Sealed application images.

``app_id[16] | version u32 | code_len u32 | sealed code[code_len] | tag[16]``,
sealed under the per-epoch image key with the 24-byte header as associated
data. Every image key is used for a single image, so the nonce only needs
to be unique per (key, version).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .crypto import TAG_BYTES, AlgId, aead_decrypt, aead_encrypt
from .errors import MalformedFrame

_HEADER = struct.Struct(">16sII")
HEADER_BYTES = _HEADER.size


@dataclass(frozen=True)
class AppImage:
    app_id: bytes
    version: int
    sealed: bytes
    tag: bytes

    @property
    def code_len(self) -> int:
        return len(self.sealed)

    def header(self) -> bytes:
        return _HEADER.pack(self.app_id, self.version, len(self.sealed))

    def encode(self) -> bytes:
        return self.header() + self.sealed + self.tag

    @classmethod
    def decode(cls, raw: bytes) -> "AppImage":
        if len(raw) < HEADER_BYTES + TAG_BYTES:
            raise MalformedFrame("truncated app image")
        app_id, version, code_len = _HEADER.unpack_from(raw)
        if len(raw) != HEADER_BYTES + code_len + TAG_BYTES:
            raise MalformedFrame("app image length mismatch")
        return cls(bytes(app_id), version, bytes(raw[HEADER_BYTES:-TAG_BYTES]), bytes(raw[-TAG_BYTES:]))


def _nonce(version: int) -> bytes:
    return b"app-image\x00\x00\x00" + version.to_bytes(4, "big")


def seal_image(alg: AlgId, image_key: bytes, app_id: bytes, version: int, code: bytes) -> AppImage:
    if len(app_id) != 16:
        raise ValueError("app_id must be 16 bytes")
    header = _HEADER.pack(app_id, version, len(code))
    ct, tag = aead_encrypt(alg, image_key, _nonce(version), header, code)
    return AppImage(app_id, version, ct, tag)


def open_image(alg: AlgId, image_key: bytes, image: AppImage) -> bytearray:
    """Decrypt into a fresh mutable buffer so callers can wipe it afterwards."""
    return bytearray(aead_decrypt(alg, image_key, _nonce(image.version), image.header(), image.sealed, image.tag))


def wipe(buf: bytearray) -> None:
    buf[:] = bytes(len(buf))
