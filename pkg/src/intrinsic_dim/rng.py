"""Counter-based pseudorandom streams.

Every random quantity in the package (projection entries, initial weights,
data shuffles, ES noise) is drawn from a stream addressed by a key path such
as ``(seed, "dense", column)``.  Draw ``i`` of a stream is a pure function of
the key and ``i``, so construction order and parallelism never change values.

Scheme 1 (the only scheme so far):

* key derivation: ``k = mix64(seed + GOLDEN)``, then for each path element
  ``p`` (strings are hashed with FNV-1a 64) ``k = mix64(k ^ (p + GOLDEN))``.
* raw word ``i``: ``mix64(k + (i + 1) * GOLDEN)`` (all arithmetic mod 2**64).
* uniform: ``(word >> 11) * 2**-53`` in ``[0, 1)``.
* normal ``i``: Box-Muller cosine branch on words ``2i`` and ``2i + 1``:
  ``sqrt(-2 log(1 - u0)) * cos(2 pi u1)``.
* permutation of ``n``: stable argsort of ``n`` raw words.

``mix64`` is the SplitMix64 finalizer.
"""
from __future__ import annotations

import numpy as np

SCHEME_ID = 1

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix64_int(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _fnv1a(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode():
        h = ((h ^ byte) * 0x100000001B3) & MASK64
    return h


def derive_key(seed: int, *path) -> int:
    """Fold a seed and a key path into a 64-bit stream key."""
    k = _mix64_int(int(seed) + GOLDEN)
    for p in path:
        v = _fnv1a(p) if isinstance(p, str) else int(p) & MASK64
        k = _mix64_int(k ^ ((v + GOLDEN) & MASK64))
    return k


def derive_seed(seed: int, *path) -> int:
    """Child seed for a sub-experiment; same function as :func:`derive_key`."""
    return derive_key(seed, *path)


class Stream:
    """Sequential reader over one keyed stream.

    Each draw method consumes words from an internal counter, so two
    ``Stream`` objects built from the same key path return identical values
    for identical call sequences.
    """

    def __init__(self, seed: int, *path):
        self.key = derive_key(seed, *path)
        self.counter = 0

    def words(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + 1 + n, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            z = np.uint64(self.key) + idx * np.uint64(GOLDEN)
            return _mix64(z)

    def uniform(self, n: int) -> np.ndarray:
        return (self.words(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normal(self, n: int) -> np.ndarray:
        u = self.uniform(2 * n)
        u0, u1 = u[0::2], u[1::2]
        return np.sqrt(-2.0 * np.log1p(-u0)) * np.cos(2.0 * np.pi * u1)

    def signs(self, n: int) -> np.ndarray:
        """Rademacher +-1 values (float64) from the top bit of each word."""
        top = (self.words(n) >> np.uint64(63)).astype(np.float64)
        return 1.0 - 2.0 * top

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.words(n), kind="stable")

    def integers(self, n: int, high: int) -> np.ndarray:
        """Integers in ``[0, high)`` by multiply-shift on uniforms."""
        return np.minimum((self.uniform(n) * high).astype(np.int64), high - 1)
