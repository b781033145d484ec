"""Deterministic 64-bit pseudo-random generator (SplitMix64).

Used wherever reproducibility must hold bit-for-bit across platforms and
library versions: dataset splitting, synthetic data generation, and
quasi-random scrambling. Heavier vectorized sampling inside training loops
uses numpy generators instead, which are deterministic per seed but not
pinned by this module.

Algorithm: SplitMix64 (Steele, Lea, Flood 2014), the reference 64-bit
state-increment mixer. Stream version 1; any change to the update or
output function must bump STREAM_VERSION.
"""

from __future__ import annotations

import hashlib
import math

STREAM_VERSION = 1

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """64-bit generator with a single word of state."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def below(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            d = self.next_u64()
            if d < limit:
                return d % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle, descending index order."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def normal(self) -> float:
        """Standard normal via Box-Muller; the sine partner is discarded
        so the draw count per call is fixed."""
        # offset keeps u1 strictly inside (0, 1) so log() is finite
        u1 = ((self.next_u64() >> 11) + 0.5) * 2.0**-53
        u2 = (self.next_u64() >> 11) * 2.0**-53
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def derive_seed(root: int, label: str) -> int:
    """Stable sub-stream seed for (root, label), independent of hash
    randomization."""
    digest = hashlib.sha256(f"{root}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big")
