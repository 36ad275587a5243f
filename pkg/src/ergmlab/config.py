"""Graphs on [n] as points of the hypercube {0,1}^M, M = n(n-1)/2.

Edges are numbered column-major: pair (i, j) with i < j has index
``j*(j-1)//2 + i``, so (0,1)->0, (0,2)->1, (1,2)->2, (0,3)->3, ...
This order is frozen; traces, hex dumps and seeded runs depend on it.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import NamedTuple

import numba
import numpy as np

MAX_N = 4096


class EdgePair(NamedTuple):
    i: int
    j: int

    @classmethod
    def of(cls, a: int, b: int) -> "EdgePair":
        a, b = int(a), int(b)
        if a == b:
            raise ValueError(f"loop ({a},{b}) is not an edge")
        if a < 0 or b < 0:
            raise ValueError(f"negative vertex in ({a},{b})")
        return cls(min(a, b), max(a, b))

    def shares_vertex(self, other: "EdgePair") -> bool:
        return bool({self.i, self.j} & {other.i, other.j})


def n_edges(n: int) -> int:
    return n * (n - 1) // 2


def edge_index(e, n: int) -> int:
    i, j = int(e[0]), int(e[1])
    if not (0 <= i < j < n):
        raise ValueError(f"edge ({i},{j}) out of range for n={n} (need 0 <= i < j < n)")
    return j * (j - 1) // 2 + i


def edge_from_index(k: int, n: int) -> EdgePair:
    M = n_edges(n)
    if not 0 <= k < M:
        raise ValueError(f"edge index {k} out of range [0, {M})")
    j = (1 + math.isqrt(1 + 8 * k)) // 2
    while j * (j - 1) // 2 > k:
        j -= 1
    while (j + 1) * j // 2 <= k:
        j += 1
    return EdgePair(k - j * (j - 1) // 2, j)


@lru_cache(maxsize=64)
def edge_arrays(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Endpoint arrays (I, J) indexed by edge index; read-only."""
    I = np.empty(n_edges(n), dtype=np.int64)
    J = np.empty(n_edges(n), dtype=np.int64)
    k = 0
    for j in range(1, n):
        I[k:k + j] = np.arange(j)
        J[k:k + j] = j
        k += j
    I.flags.writeable = False
    J.flags.writeable = False
    return I, J


def _check_n(n: int) -> None:
    if not 2 <= n <= MAX_N:
        raise ValueError(f"vertex count n={n} outside supported range [2, {MAX_N}]")


class Configuration:
    """One graph state: flat edge bits plus symmetric adjacency rows.

    Both views are uint8; every mutator updates both so they never disagree.
    """

    __slots__ = ("n", "bits", "adj")

    def __init__(self, n: int, bits=None):
        _check_n(n)
        self.n = n
        M = n_edges(n)
        if bits is None:
            self.bits = np.zeros(M, dtype=np.uint8)
        else:
            b = np.asarray(bits)
            if b.shape != (M,):
                raise ValueError(f"bit vector has shape {b.shape}, expected ({M},)")
            if b.size and (b.min() < 0 or b.max() > 1):
                raise ValueError("bits must be 0/1")
            self.bits = b.astype(np.uint8, copy=True)
        self.adj = np.zeros((n, n), dtype=np.uint8)
        I, J = edge_arrays(n)
        self.adj[I, J] = self.bits
        self.adj[J, I] = self.bits

    @classmethod
    def _raw(cls, n: int, bits: np.ndarray, adj: np.ndarray) -> "Configuration":
        x = cls.__new__(cls)
        x.n, x.bits, x.adj = n, bits, adj
        return x

    @classmethod
    def empty(cls, n: int) -> "Configuration":
        return cls(n)

    @classmethod
    def full(cls, n: int) -> "Configuration":
        _check_n(n)
        return cls(n, np.ones(n_edges(n), dtype=np.uint8))

    @classmethod
    def from_edges(cls, n: int, edges) -> "Configuration":
        x = cls(n)
        for e in edges:
            x.set(e, 1)
        return x

    @classmethod
    def gnp(cls, n: int, p: float, rng) -> "Configuration":
        """Erdős–Rényi G(n, p) using one uniform per edge, in edge order."""
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p={p} outside [0,1]")
        u = rng.uniforms(n_edges(n))
        return cls(n, (u < p).astype(np.uint8))

    @property
    def M(self) -> int:
        return self.bits.shape[0]

    def copy(self) -> "Configuration":
        return Configuration._raw(self.n, self.bits.copy(), self.adj.copy())

    def has(self, e) -> bool:
        return bool(self.bits[edge_index(e, self.n)])

    def set(self, e, value: int) -> None:
        i, j = int(e[0]), int(e[1])
        if i > j:
            i, j = j, i
        k = edge_index((i, j), self.n)
        v = 1 if value else 0
        self.bits[k] = v
        self.adj[i, j] = v
        self.adj[j, i] = v

    def flip(self, e) -> None:
        self.set(e, 0 if self.has(EdgePair.of(*e)) else 1)

    def with_edge(self, e, value: int) -> "Configuration":
        """x_{e+} (value=1) or x_{e-} (value=0) as a new configuration."""
        y = self.copy()
        y.set(e, value)
        return y

    def edge_count(self) -> int:
        return int(self.bits.sum(dtype=np.int64))

    def edges(self) -> list[EdgePair]:
        I, J = edge_arrays(self.n)
        idx = np.flatnonzero(self.bits)
        return [EdgePair(int(I[k]), int(J[k])) for k in idx]

    def degrees(self) -> np.ndarray:
        return self.adj.sum(axis=1, dtype=np.int64)

    def is_consistent(self) -> bool:
        I, J = edge_arrays(self.n)
        a = self.adj
        return (
            np.array_equal(a, a.T)
            and not a.diagonal().any()
            and np.array_equal(a[I, J], self.bits)
        )

    def to_int(self) -> int:
        """Integer code with bit k = edge k (only sensible for small M)."""
        return int.from_bytes(np.packbits(self.bits, bitorder="little").tobytes(), "little")

    @classmethod
    def from_int(cls, n: int, code: int) -> "Configuration":
        M = n_edges(n)
        if code < 0 or code >> M:
            raise ValueError(f"code {code} does not fit {M} edge bits")
        raw = np.frombuffer(code.to_bytes((M + 7) // 8 or 1, "little"), dtype=np.uint8)
        return cls(n, np.unpackbits(raw, bitorder="little")[:M])

    def to_hex(self) -> str:
        width = (self.M + 3) // 4
        return f"n={self.n};{self.to_int():0{width}x}"

    @classmethod
    def from_hex(cls, text: str) -> "Configuration":
        head, _, digits = text.strip().partition(";")
        if not head.startswith("n="):
            raise ValueError(f"bad configuration text {text!r}: expected 'n=<n>;<hex>'")
        n = int(head[2:])
        return cls.from_int(n, int(digits, 16) if digits else 0)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Configuration):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash((self.n, self.bits.tobytes()))

    def __repr__(self) -> str:
        return f"Configuration(n={self.n}, edges={self.edge_count()}/{self.M})"


def _same_n(x: Configuration, y: Configuration) -> None:
    if x.n != y.n:
        raise ValueError(f"configurations on different vertex counts ({x.n} vs {y.n})")


def hamming_distance(x: Configuration, y: Configuration) -> int:
    _same_n(x, y)
    return int(np.count_nonzero(x.bits != y.bits))


def partial_order_leq(x: Configuration, y: Configuration) -> bool:
    _same_n(x, y)
    return bool(np.all(x.bits <= y.bits))


def meet_join(x: Configuration, y: Configuration) -> tuple[Configuration, Configuration]:
    _same_n(x, y)
    return (
        Configuration._raw(x.n, np.minimum(x.bits, y.bits), np.minimum(x.adj, y.adj)),
        Configuration._raw(x.n, np.maximum(x.bits, y.bits), np.maximum(x.adj, y.adj)),
    )


@numba.njit(cache=True, nogil=True)
def nb_set_edge(adj, bits, I, J, k, v):
    bits[k] = v
    adj[I[k], J[k]] = v
    adj[J[k], I[k]] = v
