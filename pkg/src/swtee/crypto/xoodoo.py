"""Xoodoo[n_r] permutation on a 384-bit state.

The state is held as three 128-bit planes, one Python int each; lane ``x`` of
a plane occupies bits ``32*x .. 32*x+31``. Byte order matches the reference
layout: plane y, lane x, little-endian lanes.
"""

from __future__ import annotations

STATE_BYTES = 48
MAX_ROUNDS = 12

_M128 = (1 << 128) - 1

ROUND_CONSTANTS = (
    0x058, 0x038, 0x3C0, 0x0D0, 0x120, 0x014,
    0x060, 0x02C, 0x380, 0x0F0, 0x1A0, 0x012,
)


def _lane_masks(shift: int) -> tuple[int, int]:
    hi = ((0xFFFFFFFF << shift) & 0xFFFFFFFF) * 0x00000001_00000001_00000001_00000001
    lo = ((1 << shift) - 1) * 0x00000001_00000001_00000001_00000001
    return hi, lo


# (hi mask, lo mask) per rotation amount used by the round function
_HI5, _LO5 = _lane_masks(5)
_HI14, _LO14 = _lane_masks(14)
_HI11, _LO11 = _lane_masks(11)
_HI1, _LO1 = _lane_masks(1)
_HI8, _LO8 = _lane_masks(8)


def permute_planes(a0: int, a1: int, a2: int, rounds: int = MAX_ROUNDS) -> tuple[int, int, int]:
    """Apply the last ``rounds`` rounds of Xoodoo to three packed planes."""
    m = _M128
    hi5, lo5, hi14, lo14, hi11, lo11 = _HI5, _LO5, _HI14, _LO14, _HI11, _LO11
    hi1, lo1, hi8, lo8 = _HI1, _LO1, _HI8, _LO8
    for rc in ROUND_CONSTANTS[MAX_ROUNDS - rounds:]:
        # theta
        p = a0 ^ a1 ^ a2
        p = ((p << 32) | (p >> 96)) & m
        e = (((p << 5) & hi5) | ((p >> 27) & lo5)) ^ (((p << 14) & hi14) | ((p >> 18) & lo14))
        a0 ^= e
        a1 ^= e
        a2 ^= e
        # rho-west
        a1 = ((a1 << 32) | (a1 >> 96)) & m
        a2 = ((a2 << 11) & hi11) | ((a2 >> 21) & lo11)
        # iota
        a0 ^= rc
        # chi
        b0 = ~a1 & a2
        b1 = ~a2 & a0
        b2 = ~a0 & a1
        a0 ^= b0
        a1 ^= b1
        a2 ^= b2
        # rho-east
        a1 = ((a1 << 1) & hi1) | ((a1 >> 31) & lo1)
        a2 = ((a2 << 64) | (a2 >> 64)) & m
        a2 = ((a2 << 8) & hi8) | ((a2 >> 24) & lo8)
    return a0, a1, a2


def xoodoo_permute(state: bytes, rounds: int = MAX_ROUNDS) -> bytes:
    """Permute a 48-byte state with Xoodoo reduced to ``rounds`` rounds (0..12)."""
    if len(state) != STATE_BYTES:
        raise ValueError(f"state must be {STATE_BYTES} bytes, got {len(state)}")
    if not 0 <= rounds <= MAX_ROUNDS:
        raise ValueError(f"rounds must be in 0..{MAX_ROUNDS}")
    v = int.from_bytes(state, "little")
    a0, a1, a2 = permute_planes(v & _M128, (v >> 128) & _M128, v >> 256, rounds)
    return (a0 | (a1 << 128) | (a2 << 256)).to_bytes(STATE_BYTES, "little")
