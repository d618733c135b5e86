"""
Deterministic random streams.

xoshiro256++ seeded through SplitMix64, with Box-Muller normals. The
generator and the normal transform are fixed so that any implementation fed
the same u64 seed draws the same numbers, on any platform.
"""
import math
from typing import List

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
TWO_PI = 2.0 * math.pi

_JUMP = (0x180EC6D33CFD0ABA, 0xD5A61266F0C9392C, 0xA9582618E03FC9AA, 0x39ABDC4529B1661C)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class SplitMix64:
    """SplitMix64 sequence; used to expand seeds and derive per-trial seeds."""

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)


def splitmix64(seed: int) -> int:
    """First output of a SplitMix64 sequence started at `seed`."""
    return SplitMix64(seed).next_u64()


def derive_seed(master_seed: int, index: int) -> int:
    """Seed of stream `index` under `master_seed`: SplitMix64(master XOR index)."""
    return splitmix64((master_seed ^ index) & MASK64)


class Xoshiro256pp:
    """xoshiro256++ generator with uniform and standard normal draws."""

    def __init__(self, seed: int = 0):
        self.seed = seed & MASK64
        expander = SplitMix64(self.seed)
        self.s = [expander.next_u64() for _ in range(4)]
        self._spare = None

    @classmethod
    def from_state(cls, state: List[int]) -> "Xoshiro256pp":
        if len(state) != 4 or not any(state):
            raise ValueError("xoshiro256++ state must be four words, not all zero")
        rng = cls.__new__(cls)
        rng.seed = None
        rng.s = [w & MASK64 for w in state]
        rng._spare = None
        return rng

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self.s
        result = (_rotl((s0 + s3) & MASK64, 23) + s0) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.s = [s0, s1, s2, s3]
        return result

    def jumped(self) -> "Xoshiro256pp":
        """Independent stream 2^128 draws ahead; this generator is left untouched."""
        walker = Xoshiro256pp.from_state(list(self.s))
        acc = [0, 0, 0, 0]
        for word in _JUMP:
            for b in range(64):
                if word & (1 << b):
                    acc = [a ^ w for a, w in zip(acc, walker.s)]
                walker.next_u64()
        jumped = Xoshiro256pp.from_state(acc)
        jumped.seed = self.seed
        return jumped

    def uniform(self) -> float:
        """Uniform draw in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def uniform_range(self, low: float, high: float) -> float:
        return low + (high - low) * self.uniform()

    def normal(self) -> float:
        # Box-Muller; both outputs are used, the second one is kept for the next call
        if self._spare is not None:
            value, self._spare = self._spare, None
            return value
        u1 = 1.0 - self.uniform()  # (0, 1]
        u2 = self.uniform()
        radius = math.sqrt(-2.0 * math.log(u1))
        angle = TWO_PI * u2
        self._spare = radius * math.sin(angle)
        return radius * math.cos(angle)

    def uniforms(self, n: int) -> np.ndarray:
        return np.array([self.uniform() for _ in range(n)], dtype=np.float64)

    def normals(self, n: int) -> np.ndarray:
        return np.array([self.normal() for _ in range(n)], dtype=np.float64)

    def below(self, n: int) -> int:
        """Integer in [0, n)."""
        if n <= 0:
            raise ValueError(f"bound must be positive, got {n}")
        return min(int(self.uniform() * n), n - 1)
