"""Reproducible random streams.

Every stream is SplitMix64 run from a per-stream key.  The key for
``(master_seed, stream_id)`` is::

    key = mix64(mix64(master_seed ^ SEED_SALT) + stream_id * GOLDEN)

and the k-th draw (k = 0, 1, ...) is ``mix64(key + (k + 1) * GOLDEN)``, where
``mix64`` is the SplitMix64 / Stafford "variant 13" finalizer.  Uniforms use
the top 53 bits.  The same arithmetic is available as numba functions so that
hot loops consume the stream without leaving compiled code.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
SEED_SALT = 0x5851F42D4C957F2D
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV53 = 1.0 / 9007199254740992.0


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def stream_key(master_seed: int, stream_id: int) -> int:
    return mix64((mix64(master_seed ^ SEED_SALT) + stream_id * GOLDEN) & MASK64)


@numba.njit(cache=True, nogil=True)
def nb_mix64(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


@numba.njit(cache=True, nogil=True)
def nb_uniform(key, counter):
    """Draw number ``counter`` (0-based) of the stream with ``key``."""
    z = nb_mix64(key + (counter + np.uint64(1)) * np.uint64(GOLDEN))
    return np.float64(z >> np.uint64(11)) * _INV53


@numba.njit(cache=True, nogil=True)
def nb_index(u, m):
    k = np.int64(u * m)
    if k >= m:
        k = m - 1
    return k


@dataclass
class RngStream:
    """A counter-based stream; ``counter`` is the number of draws consumed."""

    master_seed: int
    stream_id: int = 0
    counter: int = 0
    key: int = field(init=False, repr=False)

    def __post_init__(self):
        self.master_seed = int(self.master_seed) & MASK64
        self.stream_id = int(self.stream_id) & MASK64
        self.key = stream_key(self.master_seed, self.stream_id)

    def next_u64(self) -> int:
        self.counter += 1
        return mix64((self.key + self.counter * GOLDEN) & MASK64)

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * _INV53

    def uniforms(self, size: int) -> np.ndarray:
        return np.array([self.uniform() for _ in range(size)])

    def index(self, m: int) -> int:
        return min(int(self.uniform() * m), m - 1)

    def child(self, k: int) -> "RngStream":
        """Independent sub-stream, e.g. for the initial state of a replica."""
        return RngStream(self.master_seed, mix64((self.stream_id * GOLDEN + k + 1) & MASK64))

    def numpy(self) -> np.random.Generator:
        """A numpy generator seeded from this stream (bootstrap resampling)."""
        return np.random.Generator(np.random.PCG64(self.next_u64()))

    # numba kernels take (key, counter) as uint64 and hand back the new counter
    @property
    def nb_key(self) -> np.uint64:
        return np.uint64(self.key)

    def advance(self, new_counter) -> None:
        self.counter = int(new_counter)
