"""Deterministic random streams.

Everything stochastic in this package flows from explicit 64-bit seeds
through splitmix64.  Streams are split by hashing string/integer labels
into the state, so independent components (loss draws, jitter, shuffles)
can be re-derived without sharing a sequence.  The generator is small
enough to reimplement in any language from this file alone:

    state <- (state + 0x9E3779B97F4A7C15) mod 2^64
    z <- state
    z <- (z xor (z >> 30)) * 0xBF58476D1CE4E5B9 mod 2^64
    z <- (z xor (z >> 27)) * 0x94D049BB133111EB mod 2^64
    output <- z xor (z >> 31)
"""

from __future__ import annotations

import math

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(seed: int, *labels: int | str) -> int:
    """Fold labels into a seed, yielding an independent child seed."""
    state = _mix(seed & _MASK)
    for label in labels:
        if isinstance(label, str):
            data = label.encode("utf-8")
        else:
            data = (label & _MASK).to_bytes(8, "little")
        for i in range(0, len(data), 8):
            chunk = int.from_bytes(data[i : i + 8].ljust(8, b"\0"), "little")
            state = _mix((state + _GOLDEN) ^ chunk)
    return state


def keyed_uniform(seed: int, *keys: int) -> float:
    """Uniform in [0, 1) as a pure function of (seed, keys).

    Used where a draw must depend on the identity of an event (e.g. a
    segment index and attempt number) rather than on draw order.
    """
    state = seed & _MASK
    for k in keys:
        state = _mix((state + _GOLDEN) ^ (k & _MASK))
    return _mix(state) / 2.0**64


class SplitMix64:
    """Sequential splitmix64 stream."""

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK
        return _mix(self._state)

    def uniform(self) -> float:
        return self.next_u64() / 2.0**64

    def uniform_in(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.uniform()

    def randint(self, n: int) -> int:
        """Integer in [0, n).  Modulo bias is irrelevant at 64 bits."""
        return self.next_u64() % n

    def normal(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        """Box-Muller transform on two uniform draws."""
        u1 = max(self.uniform(), 1e-300)
        u2 = self.uniform()
        return mu + sigma * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]
