"""Counter-based deterministic random draws.

Every draw is a pure function of (seed, stream_id, counter), built on the
splitmix64 finalizer. Integer arithmetic only, so identical inputs give
identical doubles on every platform. Signals get their own stream ids,
which lets fault transforms re-read any signal's noise at any step
without disturbing the draws of the others.
"""
from __future__ import annotations

import math

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix(z: int) -> int:
    z = (z + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def mix_key(*parts: int) -> int:
    """Fold integers into one 64-bit key, order-sensitively."""
    state = 0
    for p in parts:
        state = _mix((state ^ (p & _MASK)) & _MASK)
    return state


def stream_seed(seed: int, label: str) -> int:
    """Derive a child seed from a seed and a text label."""
    state = seed & _MASK
    for b in label.encode("utf-8"):
        state = _mix((state ^ b) & _MASK)
    return state


def uniform(seed: int, stream_id: int, counter: int) -> float:
    """One double in [0, 1), determined by (seed, stream_id, counter)."""
    k = mix_key(seed, stream_id, counter)
    return (k >> 11) * (1.0 / (1 << 53))


def normal(seed: int, stream_id: int, counter: int) -> float:
    """One standard normal draw via Box-Muller on two uniforms."""
    u1 = uniform(seed, stream_id, 2 * counter)
    u2 = uniform(seed, stream_id, 2 * counter + 1)
    if u1 <= 0.0:
        u1 = 1.0 / (1 << 53)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


class RngStream:
    """Sequential view over one (seed, stream_id) counter stream."""

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = seed & _MASK
        self.stream_id = stream_id & _MASK
        self._counter = 0

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        u = uniform(self.seed, self.stream_id, self._counter)
        self._counter += 1
        return lo + (hi - lo) * u

    def normal(self) -> float:
        v = normal(self.seed, self.stream_id, self._counter)
        self._counter += 1
        return v

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi], both ends inclusive."""
        if hi < lo:
            raise ValueError("empty range")
        span = hi - lo + 1
        u = uniform(self.seed, self.stream_id, self._counter)
        self._counter += 1
        return lo + min(int(u * span), span - 1)

    def choice(self, items):
        return items[self.randint(0, len(items) - 1)]

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(0, i)
            items[i], items[j] = items[j], items[i]
