"""Counter-based hashing used to turn explicit seeds into random draws.

Every random quantity in the package is a pure function of a 64-bit seed and
a small integer counter, evaluated with the SplitMix64 finalizer.  This lets
an oracle evaluate thousands of independent seeds in one vectorized numpy
call, something ``numpy.random.Generator`` cannot do without constructing a
generator per seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53

MASK64 = (1 << 64) - 1


def _mix64_int(z: int) -> int:
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & MASK64
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _hash_int(seed: int, counter: int) -> int:
    return _mix64_int((seed + (counter + 1) * 0x9E3779B97F4A7C15) & MASK64)


def mix64(x):
    """SplitMix64 finalizer applied elementwise to a uint64 array."""
    x = np.asarray(x, dtype=np.uint64)
    if x.ndim == 0:
        return np.uint64(_mix64_int(int(x)))
    # uint64 array arithmetic wraps silently, which is what we want.
    z = x ^ (x >> _S30)
    z *= _M1
    z ^= z >> _S27
    z *= _M2
    z ^= z >> _S31
    return z


def hash_counter(seeds, counters):
    """Hash (seed, counter) pairs; arrays broadcast against each other."""
    seeds = np.asarray(seeds, dtype=np.uint64)
    counters = np.asarray(counters, dtype=np.uint64)
    if seeds.ndim == 0 and counters.ndim == 0:
        return np.uint64(_hash_int(int(seeds), int(counters)))
    if counters.ndim == 0:
        counters = counters.reshape(1)
    return mix64(seeds + (counters + np.uint64(1)) * _GOLDEN)


def to_unit(bits):
    """Map uint64 bits to doubles in [0, 1) using the top 53 bits."""
    return (np.asarray(bits, dtype=np.uint64) >> _S11).astype(np.float64) * _INV53


def standard_normal(seeds, dim: int) -> np.ndarray:
    """Gaussian vectors, one row of length ``dim`` per seed (Box-Muller)."""
    seeds = np.asarray(seeds, dtype=np.uint64).reshape(-1, 1)
    j = np.arange(dim, dtype=np.uint64).reshape(1, -1)
    u1 = to_unit(hash_counter(seeds, 2 * j))
    u2 = to_unit(hash_counter(seeds, 2 * j + np.uint64(1)))
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)


def uniform_index(seeds, n: int) -> np.ndarray:
    """Uniform integer in ``range(n)`` per seed (multiply-shift, n < 2**32)."""
    if not 0 < n < 2**32:
        raise ValueError(f"index range must be in (0, 2**32), got {n}")
    bits = hash_counter(seeds, np.uint64(0xA5A5)) >> np.uint64(32)
    return ((bits * np.uint64(n)) >> np.uint64(32)).astype(np.int64)


@dataclass(frozen=True)
class SeedStream:
    """An immutable position in a reproducible stream of 64-bit seeds.

    ``take`` returns the next block of seeds together with the advanced
    stream, so the owner of a stream controls exactly which draws it consumes.
    """

    key: int
    counter: int = 0

    @classmethod
    def from_seed(cls, master_seed: int) -> "SeedStream":
        key = _mix64_int(int(master_seed) & MASK64)
        return cls(key=key, counter=0)

    def take(self, n: int) -> tuple[np.ndarray, "SeedStream"]:
        if n < 0:
            raise ValueError("cannot take a negative number of seeds")
        idx = np.arange(self.counter, self.counter + n, dtype=np.uint64)
        seeds = hash_counter(np.uint64(self.key), idx)
        return seeds, SeedStream(self.key, self.counter + n)

    def uniform(self) -> tuple[float, "SeedStream"]:
        bits = _hash_int(self.key, self.counter)
        return (bits >> 11) * _INV53, SeedStream(self.key, self.counter + 1)

    def spawn(self, tag: int) -> "SeedStream":
        """Independent child stream identified by ``tag``."""
        child = _hash_int(self.key, (tag + (1 << 40)) & MASK64)
        return SeedStream(key=_mix64_int(child), counter=0)
