"""Ascon-p permutation over five 64-bit words (big-endian byte order)."""

from __future__ import annotations

_M64 = 0xFFFFFFFFFFFFFFFF
_RC = tuple(((0xF - i) << 4) | i for i in range(12))


def ascon_permute(s0: int, s1: int, s2: int, s3: int, s4: int, rounds: int) -> tuple[int, int, int, int, int]:
    """Apply the last ``rounds`` rounds of Ascon-p (p^a with a = rounds)."""
    m = _M64
    for c in _RC[12 - rounds:]:
        s2 ^= c
        # substitution layer, bitsliced
        s0 ^= s4
        s4 ^= s3
        s2 ^= s1
        t0 = ~s0 & s1
        t1 = ~s1 & s2
        t2 = ~s2 & s3
        t3 = ~s3 & s4
        t4 = ~s4 & s0
        s0 ^= t1
        s1 ^= t2
        s2 ^= t3
        s3 ^= t4
        s4 ^= t0
        s1 ^= s0
        s0 ^= s4
        s3 ^= s2
        s2 ^= m
        # linear diffusion layer
        s0 ^= ((s0 >> 19) | (s0 << 45)) ^ ((s0 >> 28) | (s0 << 36))
        s1 ^= ((s1 >> 61) | (s1 << 3)) ^ ((s1 >> 39) | (s1 << 25))
        s2 ^= ((s2 >> 1) | (s2 << 63)) ^ ((s2 >> 6) | (s2 << 58))
        s3 ^= ((s3 >> 10) | (s3 << 54)) ^ ((s3 >> 17) | (s3 << 47))
        s4 ^= ((s4 >> 7) | (s4 << 57)) ^ ((s4 >> 41) | (s4 << 23))
        s0 &= m
        s1 &= m
        s2 &= m
        s3 &= m
        s4 &= m
    return s0, s1, s2, s3, s4
