"""Portable deterministic random number generation.

Everything stochastic in this package (weight init, shuffling, negative
resampling, scene synthesis) draws from SplitMix64 so that identical seeds
produce identical artifacts on any platform, independent of numpy's own
generator streams.

SplitMix64 recurrence, all arithmetic modulo 2**64:

    state += 0x9E3779B97F4A7C15
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    output = z ^ (z >> 31)

The i-th output after seeding equals mix(seed + i * GAMMA), which is what
the vectorized paths below exploit.
"""

from __future__ import annotations

import math

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB
# 53-bit mantissa scale for uniform doubles in [0, 1)
_INV53 = 1.0 / (1 << 53)


def _mix_scalar(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MUL1) & _MASK
    z = ((z ^ (z >> 27)) * _MUL2) & _MASK
    return z ^ (z >> 31)


def _mix_array(z: np.ndarray) -> np.ndarray:
    # uint64 array ops wrap silently; scalars would warn, hence the split
    # between this and _mix_scalar.
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MUL1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MUL2)
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Deterministic 64-bit generator with vectorized draw paths."""

    def __init__(self, seed: int):
        self._state = int(seed) & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK
        return _mix_scalar(self._state)

    def _next_block(self, n: int) -> np.ndarray:
        """n raw 64-bit outputs as a uint64 array, advancing the stream."""
        if n <= 0:
            return np.empty(0, dtype=np.uint64)
        start = np.uint64((self._state + _GAMMA) & _MASK)
        steps = np.arange(n, dtype=np.uint64) * np.uint64(_GAMMA)
        self._state = (self._state + n * _GAMMA) & _MASK
        return _mix_array(start + steps)

    def uniform01(self, size=None):
        """Uniform doubles in [0, 1) using the top 53 bits."""
        if size is None:
            return (self.next_u64() >> 11) * _INV53
        n = int(np.prod(size))
        out = (self._next_block(n) >> np.uint64(11)).astype(np.float64) * _INV53
        return out.reshape(size)

    def uniform(self, low: float, high: float, size=None):
        return low + (high - low) * self.uniform01(size)

    def normal(self, sigma: float = 1.0, size=None):
        """Gaussian draws via Box-Muller on pairs of uniforms."""
        scalar = size is None
        n = 1 if scalar else int(np.prod(size))
        m = (n + 1) // 2
        # u1 in (0, 1] so the log is always finite
        u1 = ((self._next_block(m) >> np.uint64(11)).astype(np.float64) + 1.0) * _INV53
        u2 = (self._next_block(m) >> np.uint64(11)).astype(np.float64) * _INV53
        r = np.sqrt(-2.0 * np.log(u1)) * sigma
        theta = (2.0 * math.pi) * u2
        out = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        if scalar:
            return float(out[0])
        return out.reshape(size)

    def below(self, n: int) -> int:
        """Integer in [0, n). Modulo reduction; the bias is below 2**-50
        for every n used in this package."""
        if n <= 0:
            raise ValueError("below() requires n >= 1")
        return self.next_u64() % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample_indices(self, n: int, k: int) -> list[int]:
        """k distinct indices from range(n), via partial Fisher-Yates."""
        if k > n:
            raise ValueError("cannot sample more indices than available")
        idx = list(range(n))
        for i in range(k):
            j = i + self.below(n - i)
            idx[i], idx[j] = idx[j], idx[i]
        return idx[:k]

    def spawn(self) -> "SplitMix64":
        """Child generator seeded from this stream."""
        return SplitMix64(self.next_u64())
