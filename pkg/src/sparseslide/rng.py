"""Deterministic random number generation.

Sequential sampling experiments have to replay bit-for-bit across machines
and across reimplementations in other languages, so we cannot lean on
``random`` or numpy's generators: their algorithms are implementation
details we don't control. Instead this module carries a small pure-Python
xoshiro256** generator, seeded through splitmix64 exactly as recommended
by the algorithm's authors (https://prng.di.unimi.it/). All arithmetic is
done on Python ints masked to 64 bits, which is slow-ish but portable and
has no overflow surprises.
"""

from __future__ import annotations

from typing import Iterable

_MASK64 = 0xFFFF_FFFF_FFFF_FFFF


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state once; returns (new_state, output)."""
    state = (state + 0x9E37_79B9_7F4A_7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58_476D_1CE4_E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D0_49BB_1331_11EB) & _MASK64
    return state, z ^ (z >> 31)


def _mix64(value: int) -> int:
    """One-shot splitmix64 finalizer, used as a cheap integer hash."""
    return splitmix64(value & _MASK64)[1]


def hash_bytes(data: bytes) -> int:
    """FNV-1a over bytes, finalized with the splitmix64 mixer.

    Used to fold string identifiers (slide ids) into 64-bit seeds in a
    way that does not depend on Python's randomized str hash.
    """
    h = 0xCBF2_9CE4_8422_2325
    for b in data:
        h = ((h ^ b) * 0x0000_0100_0000_01B3) & _MASK64
    return _mix64(h)


def derive_seed(seed: int, *components: int | str) -> int:
    """Deterministically derive a child seed from a master seed.

    Each component (int or str) is folded in with splitmix64 mixing, so
    distinct component tuples give independent-looking child seeds.
    """
    out = _mix64(seed)
    for c in components:
        if isinstance(c, str):
            c = hash_bytes(c.encode("utf-8"))
        out = _mix64(out ^ (c & _MASK64))
    return out


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Rng:
    """xoshiro256** with splitmix64 seed expansion.

    The 64-bit ``seed`` is expanded into the 256-bit state by four
    successive splitmix64 outputs. Identical seeds yield identical
    streams, independent of platform or Python version.
    """

    __slots__ = ("seed", "_s0", "_s1", "_s2", "_s3")

    def __init__(self, seed: int):
        seed &= _MASK64
        self.seed = seed
        state = seed
        state, self._s0 = splitmix64(state)
        state, self._s1 = splitmix64(state)
        state, self._s2 = splitmix64(state)
        state, self._s3 = splitmix64(state)

    def spawn(self, index: int) -> "Rng":
        """Independent generator for worker/replicate ``index``.

        Derivation is seed XOR index pushed through the usual seed
        expansion, so replicate streams never depend on how much of the
        parent stream was consumed.
        """
        return Rng(self.seed ^ (index & _MASK64))

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s0, self._s1, self._s2, self._s3
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s0, self._s1, self._s2, self._s3 = s0, s1, s2, s3
        return result

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def randbelow(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError("randbelow requires n >= 1")
        # Largest multiple of n that fits in 64 bits; draws at or above
        # it would bias the modulo and are rejected (rare for small n).
        limit = ((_MASK64 + 1) // n) * n
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def randint(self, low: int, high: int) -> int:
        """Uniform integer in [low, high], both ends inclusive."""
        if high < low:
            raise ValueError("empty range")
        return low + self.randbelow(high - low + 1)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def choice(self, items: Iterable):
        seq = list(items)
        if not seq:
            raise ValueError("empty sequence")
        return seq[self.randbelow(len(seq))]
