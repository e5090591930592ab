"""SplitMix64 primitives used for every random draw in the synthetic world.

All draws are pure functions of a 64-bit key, so any process holding the
same seed reproduces the same population without shared state.
"""

from __future__ import annotations

import hashlib

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_M1_INV = pow(_M1, -1, 1 << 64)
_M2_INV = pow(_M2, -1, 1 << 64)


def mix64(z: int) -> int:
    """SplitMix64 finalizer; a bijection on 64-bit integers."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def _unxorshift(z: int, shift: int) -> int:
    x = z
    for _ in range(64 // shift + 1):
        x = z ^ (x >> shift)
    return x & MASK64


def unmix64(z: int) -> int:
    """Inverse of :func:`mix64`."""
    z = _unxorshift(z & MASK64, 31)
    z = (z * _M2_INV) & MASK64
    z = _unxorshift(z, 27)
    z = (z * _M1_INV) & MASK64
    return _unxorshift(z, 30)


def tag_hash(tag: str) -> int:
    return int.from_bytes(hashlib.blake2b(tag.encode(), digest_size=8).digest(), "little")


def to_unit(z: int) -> float:
    """Map a 64-bit word to a float in [0, 1) using the top 53 bits."""
    return (z >> 11) * (1.0 / (1 << 53))


class SplitMix64:
    """Sequential SplitMix64 stream."""

    __slots__ = ("state",)

    def __init__(self, seed: int) -> None:
        self.state = seed & MASK64

    def next64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return mix64(self.state)

    def uniform(self) -> float:
        return to_unit(self.next64())

    def below(self, n: int) -> int:
        """Integer in ``[0, n)``; modulo bias is below 2**-40 for n < 2**24."""
        return self.next64() % n

    def between(self, lo: int, hi: int) -> int:
        """Integer in ``[lo, hi]`` inclusive."""
        return lo + self.below(hi - lo + 1)

    def choice(self, seq):
        return seq[self.below(len(seq))]


def substream(key: int, tag: str) -> SplitMix64:
    return SplitMix64(mix64(key ^ tag_hash(tag)))
