"""ISAP-A-128a authenticated encryption (ISAP v2 over Ascon-p).

Parameters: k = 128, rate 64 bits for hashing, 1 bit for re-keying,
s_H = 12, s_B = 1, s_E = 6, s_K = 12.
"""

from __future__ import annotations

from .ascon import ascon_permute

RATE = 8
S_H, S_B, S_E, S_K = 12, 1, 6, 12
TAG_BYTES = 16

_IV_A = 0x01_80_40_01_0C_01_06_0C
_IV_KA = 0x02_80_40_01_0C_01_06_0C
_IV_KE = 0x03_80_40_01_0C_01_06_0C


def _words(b: bytes) -> list[int]:
    return [int.from_bytes(b[i:i + 8], "big") for i in range(0, len(b), 8)]


def _rekey(key: bytes, iv: int, y: bytes, out_len: int) -> bytes:
    """ISAP_RK: absorb ``y`` one bit per single-round call, squeeze a session key."""
    k0, k1 = _words(key)
    s = ascon_permute(k0, k1, iv, 0, 0, S_K)
    bits = int.from_bytes(y, "big")
    nbits = 8 * len(y)
    for i in range(nbits - 1, 0, -1):
        bit = (bits >> i) & 1
        s = ascon_permute(s[0] ^ (bit << 63), s[1], s[2], s[3], s[4], S_B)
    s = ascon_permute(s[0] ^ ((bits & 1) << 63), s[1], s[2], s[3], s[4], S_K)
    return b"".join(w.to_bytes(8, "big") for w in s)[:out_len]


def _absorb_padded(s: tuple[int, ...], data: bytes) -> tuple[int, ...]:
    s0, s1, s2, s3, s4 = s
    padded = data + b"\x80" + bytes(-(len(data) + 1) % RATE)
    for i in range(0, len(padded), RATE):
        s0 ^= int.from_bytes(padded[i:i + RATE], "big")
        s0, s1, s2, s3, s4 = ascon_permute(s0, s1, s2, s3, s4, S_H)
    return s0, s1, s2, s3, s4


def _mac(key: bytes, nonce: bytes, ad: bytes, ct: bytes) -> bytes:
    n0, n1 = _words(nonce)
    s = ascon_permute(n0, n1, _IV_A, 0, 0, S_H)
    s = _absorb_padded(s, ad)
    s = s[:4] + (s[4] ^ 1,)
    s = _absorb_padded(s, ct)
    y = s[0].to_bytes(8, "big") + s[1].to_bytes(8, "big")
    ka0, ka1 = _words(_rekey(key, _IV_KA, y, 16))
    s = ascon_permute(ka0, ka1, s[2], s[3], s[4], S_H)
    return s[0].to_bytes(8, "big") + s[1].to_bytes(8, "big")


def _enc(key: bytes, nonce: bytes, data: bytes) -> bytes:
    if not data:
        return b""
    ke = _words(_rekey(key, _IV_KE, nonce, 24))
    n0, n1 = _words(nonce)
    s0, s1, s2, s3, s4 = ke[0], ke[1], ke[2], n0, n1
    n = len(data)
    full = n - n % RATE
    out = []
    for i in range(0, full, RATE):
        s0, s1, s2, s3, s4 = ascon_permute(s0, s1, s2, s3, s4, S_E)
        out.append(s0)
    stream = b"".join(w.to_bytes(8, "big") for w in out)
    if full < n:
        s0, s1, s2, s3, s4 = ascon_permute(s0, s1, s2, s3, s4, S_E)
        stream += s0.to_bytes(8, "big")[: n - full]
    return (int.from_bytes(data, "big") ^ int.from_bytes(stream, "big")).to_bytes(n, "big")


def isap_encrypt(key: bytes, nonce: bytes, ad: bytes, pt: bytes) -> tuple[bytes, bytes]:
    ct = _enc(key, nonce, pt)
    return ct, _mac(key, nonce, ad, ct)


def isap_tag(key: bytes, nonce: bytes, ad: bytes, ct: bytes) -> bytes:
    return _mac(key, nonce, ad, ct)


def isap_keystream_xor(key: bytes, nonce: bytes, data: bytes) -> bytes:
    return _enc(key, nonce, data)
