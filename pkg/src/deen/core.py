"""Dense float64 primitives and the seeded random streams used everywhere.

Random numbers come from numpy's Philox4x64 counter-based bit generator,
keyed through ``SeedSequence`` with a stream label and optional integer
counters.  Both algorithms are fixed by numpy's stability guarantees for
bit generators, so a given ``(seed, label, counters)`` yields the same raw
64-bit words on every platform.  Uniforms and normals are derived from
those words here (53-bit mantissa uniforms, Box-Muller normals) instead of
going through ``Generator`` methods, whose output may change between
numpy releases.
"""

from __future__ import annotations

import math
import zlib

import numpy as np

_TWO_PI = 2.0 * math.pi
_INV_2_53 = 1.0 / 9007199254740992.0


class DimensionError(ValueError):
    """Array shapes do not conform."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


def _label_key(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


class Rng:
    """A named, reproducible random stream.

    ``Rng(7)`` and ``Rng(7).stream("noise")`` produce unrelated sequences.
    ``spawn`` derives child streams from a label plus integer counters, which
    is how the trainer gets a fresh, independently addressable stream for
    every iteration (and why resuming from a checkpoint needs no RNG state).
    """

    def __init__(self, seed: int, key: tuple[int, ...] = ()):
        if seed < 0:
            raise DomainError("seed must be non-negative")
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
        self._bitgen = np.random.Philox(ss)

    def stream(self, label: str) -> "Rng":
        return Rng(self.seed, self.key + (_label_key(label),))

    def spawn(self, label: str, *counters: int) -> "Rng":
        return Rng(self.seed, self.key + (_label_key(label),) + tuple(counters))

    def raw(self, n: int) -> np.ndarray:
        return np.asarray(self._bitgen.random_raw(n), dtype=np.uint64)

    def uniform(self, shape=()) -> np.ndarray:
        """Uniform draws on [0, 1) with 53 random bits each."""
        n = int(np.prod(shape, dtype=np.int64))
        words = self.raw(n) >> np.uint64(11)
        return (words.astype(np.float64) * _INV_2_53).reshape(shape)

    def integers(self, high: int, shape=()) -> np.ndarray:
        """Integers in [0, high) by scaling a 53-bit uniform."""
        if high < 1:
            raise DomainError("high must be >= 1")
        u = self.uniform(shape)
        return np.minimum((u * high).astype(np.int64), high - 1)

    def normal(self, shape=()) -> np.ndarray:
        """Standard normals by the Box-Muller transform.

        Draws come in (cos, sin) pairs; for odd counts the last sine is
        discarded, so every call consumes 2 * ceil(n / 2) raw words.
        """
        n = int(np.prod(shape, dtype=np.int64))
        pairs = (n + 1) // 2
        u = self.uniform((pairs, 2))
        radius = np.sqrt(-2.0 * np.log1p(-u[:, 0]))  # 1 - u lies in (0, 1]
        angle = _TWO_PI * u[:, 1]
        z = np.empty(2 * pairs)
        z[0::2] = radius * np.cos(angle)
        z[1::2] = radius * np.sin(angle)
        return z[:n].reshape(shape)


def gaussian(rng: Rng, shape, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
    if std < 0:
        raise DomainError(f"std must be >= 0, got {std}")
    z = rng.normal(shape)
    if std == 0:
        return np.full(shape, float(mean))
    return mean + std * z


def matvec(m, v) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise DimensionError(f"cannot multiply {m.shape} by {v.shape}")
    return m @ v


def logsumexp(v) -> float:
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.size == 0:
        raise DomainError("logsumexp of an empty vector")
    top = v.max()
    if not np.isfinite(top):
        return float(top)
    return float(top + np.log(np.sum(np.exp(v - top))))


def logsumexp_rows(a: np.ndarray) -> np.ndarray:
    """Row-wise ``logsumexp`` for a 2-D array."""
    top = a.max(axis=1, keepdims=True)
    return (top + np.log(np.sum(np.exp(a - top), axis=1, keepdims=True)))[:, 0]
