"""Deterministic pseudo-random generator used everywhere randomness is needed.

Dataset splits, synthetic image generation, weight initialization, dropout
masks and epoch shuffles all draw from this generator rather than from
numpy's, so results are bit-reproducible across platforms and library
versions. The algorithm is xoshiro256** seeded through a splitmix64 chain;
both are fully specified here and pinned by test vectors.
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step: returns (next_state, output)."""
    state = (state + _GOLDEN) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _mix(x: int) -> int:
    return splitmix64(x & _MASK64)[1]


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Rng:
    """xoshiro256** generator with stream derivation.

    `derive(*words)` produces an independent child generator from the parent
    seed and integer tags, so parallel consumers (per-class shuffles,
    per-sample image synthesis) do not share or shift each other's streams.
    """

    def __init__(self, seed: int):
        self.seed = seed & _MASK64
        s = self.seed
        self._s = []
        for _ in range(4):
            s, out = splitmix64(s)
            self._s.append(out)
        self._spare_normal: float | None = None

    def derive(self, *words: int) -> "Rng":
        child = self.seed
        for w in words:
            child = _mix(child ^ (w & _MASK64))
        return Rng(child)

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s[1] << 17) & _MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def random(self) -> float:
        """Uniform double in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def below(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError("bound must be positive")
        limit = ((1 << 64) // n) * n
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def randrange(self, low: int, high: int) -> int:
        return low + self.below(high - low)

    def normal(self) -> float:
        """Standard normal via Box-Muller; caches the paired variate."""
        if self._spare_normal is not None:
            z = self._spare_normal
            self._spare_normal = None
            return z
        u1 = 1.0 - self.random()  # (0, 1]
        u2 = self.random()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare_normal = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def uniform_array(self, n: int, low: float, high: float) -> list[float]:
        return [self.uniform(low, high) for _ in range(n)]

    def normal_array(self, n: int) -> list[float]:
        return [self.normal() for _ in range(n)]
