"""Seeded, portable random number generation.

All procedural generation in this package draws from SplitMix64, a tiny
64-bit PRNG with a published reference implementation (Steele, Lea &
Flood; the same generator used to seed xoshiro/xoroshiro).  It is chosen
over the stdlib Mersenne Twister so that a (level, seed) pair reproduces
byte-identical worlds in any language with 64-bit integers.

Algorithm, exactly as in the reference C:

    state += 0x9E3779B97F4A7C15
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    return z ^ (z >> 31)

Bounded draws use plain modulo reduction (documented, slightly biased
for ranges that do not divide 2^64; irrelevant at the tiny ranges used
here but stated so other implementations can match bit-for-bit).
"""

from __future__ import annotations

MASK64 = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(state: int) -> tuple[int, int]:
    """Advance one SplitMix64 step; returns (new_state, output)."""
    state = (state + _GAMMA) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def mix(*parts: int | str) -> int:
    """Fold integers and short strings into one 64-bit seed
    (order-sensitive).

    Used to derive independent sub-streams, e.g. per retry attempt:
    mix(seed, "gen", attempt).
    """
    acc = 0
    for p in parts:
        if isinstance(p, str):
            n = 0
            for b in p.encode("utf-8"):
                n = (n * 257 + b + 1) & MASK64
            p = n
        acc, out = splitmix64((acc ^ (p & MASK64)) & MASK64)
        acc = out
    return acc


class Rng:
    """Deterministic SplitMix64 stream with the handful of draw shapes
    the generators need."""

    def __init__(self, seed: int):
        self._state = seed & MASK64

    def next64(self) -> int:
        self._state, out = splitmix64(self._state)
        return out

    def below(self, n: int) -> int:
        """Uniform-ish integer in [0, n) via modulo reduction."""
        if n <= 0:
            raise ValueError("below() needs n >= 1")
        return self.next64() % n

    def randint(self, lo: int, hi: int) -> int:
        """Integer in [lo, hi] inclusive."""
        return lo + self.below(hi - lo + 1)

    def choice(self, seq):
        if not seq:
            raise IndexError("choice() on empty sequence")
        return seq[self.below(len(seq))]

    def shuffle(self, items: list) -> list:
        """In-place Fisher-Yates shuffle; returns the list."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]
        return items

    def sample(self, seq, k: int) -> list:
        """k distinct elements, order determined by the stream."""
        if k > len(seq):
            raise ValueError("sample() larger than population")
        pool = list(seq)
        out = []
        for _ in range(k):
            out.append(pool.pop(self.below(len(pool))))
        return out

    def digits(self, n: int) -> str:
        """String of n decimal digits (leading zeros allowed)."""
        return "".join(str(self.below(10)) for _ in range(n))
