"""Portable seeded random stream.

Every sampling decision in the package goes through :class:`SplitMix64` so
masks, scenes and oracle noise are reproducible byte-for-byte in any language
that implements the same few integer operations.

Stream definition (all arithmetic modulo 2**64)::

    state += 0x9E3779B97F4A7C15
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    output z ^ (z >> 31)

Derived quantities:

* ``uniform()``: ``(next() >> 11) * 2**-53`` in ``[0, 1)``.
* ``below(n)``: draw ``x`` until ``x < 2**64 - (2**64 % n)``, return ``x % n``.
* ``normal_block(n)``: Box-Muller on two uniforms ``u1, u2``:
  ``sqrt(-2 ln(1 - u1)) * cos(2 pi u2)``; one normal per two draws.
* ``sample(n, k)``: first ``k`` slots of a forward partial Fisher-Yates over
  ``range(n)``; slot ``i`` swaps with ``i + below(n - i)``.
* ``derive_seed(seed, *keys)``: fold each key into the seed with
  ``seed = mix64(seed + (key + 1) * GOLDEN)``.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a 64-bit integer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic child seed for ``(seed, key0, key1, ...)``."""
    s = seed & MASK64
    for k in keys:
        s = mix64(s + ((k + 1) * GOLDEN & MASK64))
    return s


class SplitMix64:
    """Counter-based SplitMix64 generator."""

    def __init__(self, seed: int) -> None:
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        return mix64(self.state)

    def next_block(self, count: int) -> np.ndarray:
        """The next ``count`` outputs as ``uint64``, identical to ``count`` calls of :meth:`next`."""
        steps = np.arange(1, count + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + steps * np.uint64(GOLDEN)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
            z = z ^ (z >> np.uint64(31))
        self.state = (self.state + count * GOLDEN) & MASK64
        return z

    def uniform(self) -> float:
        return (self.next() >> 11) * 2.0**-53

    def uniform_block(self, count: int) -> np.ndarray:
        return (self.next_block(count) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def below(self, n: int) -> int:
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next()
            if x < limit:
                return x % n

    def normal_block(self, count: int) -> np.ndarray:
        u = self.uniform_block(2 * count)
        u1, u2 = u[0::2], u[1::2]
        return np.sqrt(-2.0 * np.log(1.0 - u1)) * np.cos(2.0 * np.pi * u2)

    def sample(self, n: int, k: int) -> list[int]:
        """``k`` distinct values from ``range(n)`` in selection order."""
        if not 0 <= k <= n:
            raise ValueError(f"cannot sample {k} of {n}")
        pool = list(range(n))
        for i in range(k):
            j = i + self.below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]

    def permutation(self, n: int) -> list[int]:
        return self.sample(n, n)
