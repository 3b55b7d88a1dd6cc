"""Xoodyak: the Cyclist mode over Xoodoo[12].

Only the pieces the rest of the package needs are exposed: hashing / XOF,
keyed absorb-then-squeeze (MAC), and the NIST LWC AEAD profile
(16-byte key, 16-byte nonce, 16-byte tag).
"""

from __future__ import annotations

from .xoodoo import permute_planes

HASH_RATE = 16
KEYED_ABSORB_RATE = 44
KEYED_SQUEEZE_RATE = 24
TAG_BYTES = 16

_M128 = (1 << 128) - 1
_BYTE47 = 120  # bit offset of state byte 47 inside plane 2


class Cyclist:
    """Cyclist duplex object. ``key=None`` selects hash mode."""

    __slots__ = ("a0", "a1", "a2", "keyed", "up_phase", "absorb_rate", "squeeze_rate")

    def __init__(self, key: bytes | None = None, key_id: bytes = b"", counter: bytes = b""):
        self.a0 = self.a1 = self.a2 = 0
        self.up_phase = True
        self.keyed = False
        self.absorb_rate = HASH_RATE
        self.squeeze_rate = HASH_RATE
        if key is not None:
            self.keyed = True
            self.absorb_rate = KEYED_ABSORB_RATE
            self.squeeze_rate = KEYED_SQUEEZE_RATE
            if len(key) + len(key_id) + 1 > KEYED_ABSORB_RATE:
                raise ValueError("key and key id too long")
            self._absorb_any(key + key_id + bytes([len(key_id)]), KEYED_ABSORB_RATE, 0x02)
            if counter:
                self._absorb_any(counter, 1, 0x00)

    # -- state access -------------------------------------------------------

    def _add(self, data: bytes, cd: int) -> None:
        """XOR ``data || 0x01`` into the state front and ``cd`` into byte 47."""
        v = int.from_bytes(data, "little") | (1 << (8 * len(data)))
        self.a0 ^= v & _M128
        self.a1 ^= (v >> 128) & _M128
        self.a2 ^= (v >> 256) ^ (cd << _BYTE47)

    def _extract(self, n: int) -> int:
        """First ``n`` (<= 32) state bytes as a little-endian int."""
        if n <= 16:
            return self.a0 & ((1 << (8 * n)) - 1)
        return self.a0 | ((self.a1 & ((1 << (8 * (n - 16))) - 1)) << 128)

    def _up(self, cu: int) -> None:
        self.up_phase = True
        if self.keyed:
            self.a2 ^= cu << _BYTE47
        self.a0, self.a1, self.a2 = permute_planes(self.a0, self.a1, self.a2)

    def _down(self, data: bytes, cd: int) -> None:
        self.up_phase = False
        self._add(data, cd if self.keyed else cd & 0x01)

    # -- Cyclist interface --------------------------------------------------

    def _absorb_any(self, data: bytes, rate: int, cd: int) -> None:
        pos = 0
        while True:
            if not self.up_phase:
                self._up(0x00)
            self._down(data[pos:pos + rate], cd)
            cd = 0x00
            pos += rate
            if pos >= len(data):
                break

    def absorb(self, data: bytes) -> None:
        self._absorb_any(data, self.absorb_rate, 0x03)

    def _squeeze_any(self, n: int, cu: int) -> bytes:
        rate = self.squeeze_rate
        self._up(cu)
        take = min(n, rate)
        out = [self._extract(take).to_bytes(take, "little")]
        remaining = n - take
        while remaining > 0:
            self._down(b"", 0x00)
            self._up(0x00)
            take = min(remaining, rate)
            out.append(self._extract(take).to_bytes(take, "little"))
            remaining -= take
        return b"".join(out)

    def squeeze(self, n: int) -> bytes:
        return self._squeeze_any(n, 0x40)

    def _crypt(self, data: bytes, decrypt: bool) -> bytes:
        if not self.keyed:
            raise ValueError("crypt requires keyed mode")
        rate = KEYED_SQUEEZE_RATE
        n = len(data)
        out = bytearray(n)
        a0, a1, a2 = self.a0, self.a1, self.a2
        cu = 0x80 << _BYTE47
        pos = 0
        while True:
            block = data[pos:pos + rate]
            k = len(block)
            a0, a1, a2 = permute_planes(a0, a1, a2 ^ cu)
            cu = 0
            mask = (1 << (8 * k)) - 1
            stream = (a0 | (a1 << 128)) & mask
            inp = int.from_bytes(block, "little")
            res = inp ^ stream
            out[pos:pos + k] = res.to_bytes(k, "little")
            # Down(P || 0x01) always absorbs the plaintext
            front = (res if decrypt else inp) ^ (1 << (8 * k))
            a0 ^= front & _M128
            a1 ^= front >> 128
            pos += rate
            if pos >= n:
                break
        self.a0, self.a1, self.a2 = a0, a1, a2
        self.up_phase = False
        return bytes(out)

    def encrypt(self, plaintext: bytes) -> bytes:
        return self._crypt(plaintext, decrypt=False)

    def decrypt(self, ciphertext: bytes) -> bytes:
        return self._crypt(ciphertext, decrypt=True)


def xoodyak_hash(msg: bytes, out_len: int = 32) -> bytes:
    c = Cyclist()
    c.absorb(msg)
    return c.squeeze(out_len)


def xoodyak_mac(key: bytes, msg: bytes, out_len: int = TAG_BYTES) -> bytes:
    c = Cyclist(key)
    c.absorb(msg)
    return c.squeeze(out_len)


def xoodyak_encrypt(key: bytes, nonce: bytes, ad: bytes, pt: bytes) -> tuple[bytes, bytes]:
    c = Cyclist(key)
    c.absorb(nonce)
    c.absorb(ad)
    ct = c.encrypt(pt)
    return ct, c.squeeze(TAG_BYTES)


def xoodyak_decrypt_unverified(key: bytes, nonce: bytes, ad: bytes, ct: bytes) -> tuple[bytes, bytes]:
    """Return (plaintext, expected tag); the caller compares tags."""
    c = Cyclist(key)
    c.absorb(nonce)
    c.absorb(ad)
    pt = c.decrypt(ct)
    return pt, c.squeeze(TAG_BYTES)
