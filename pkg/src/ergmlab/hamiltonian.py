"""Model terms, the Hamiltonian and its discrete derivatives.

    H(x)        = sum_i beta_i N_{G_i}(x) / n^{|V_i|-2}
    d_e H(x)    = sum_i beta_i N_{G_i}(x, e) / n^{|V_i|-2}
    d_ef H(x)   = sum_i beta_i N_{G_i}(x, e, f) / n^{|V_i|-2}

The update probability of the heat-bath chain is logistic(d_e H(x)).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import NamedTuple

import numba
import numpy as np

from .config import Configuration, EdgePair
from .motifs import (
    KIND_GENERIC,
    MotifSpec,
    PAD,
    count_motif,
    count_motif_double_pinned,
    count_motif_pinned,
    nb_pinned_fast,
    nb_pinned_generic,
    pin_table,
)

MAX_TERMS = 8
MAX_TERM_VERTICES = 5


class ModelKernel(NamedTuple):
    kinds: np.ndarray  # int64[s]
    betas: np.ndarray  # float64[s]
    norms: np.ndarray  # float64[s], n^{|V|-2}
    nv: np.ndarray  # int64[s]
    npins: np.ndarray  # int64[s]
    pins: np.ndarray  # int64[s, P, PAD, PAD]


@dataclass(frozen=True)
class ModelSpec:
    n: int
    terms: tuple[tuple[MotifSpec, float], ...]

    def __post_init__(self):
        terms = tuple((g, float(b)) for g, b in self.terms)
        if not 1 <= len(terms) <= MAX_TERMS:
            raise ValueError(f"need between 1 and {MAX_TERMS} terms, got {len(terms)}")
        for g, b in terms:
            if not (b > 0 and math.isfinite(b)):
                raise ValueError(f"beta for {g.label} must be positive and finite, got {b}")
            if g.vertex_count > MAX_TERM_VERTICES:
                raise ValueError(f"term motif {g.label} has more than {MAX_TERM_VERTICES} vertices")
        if self.n < max(g.vertex_count for g, _ in terms):
            raise ValueError(f"n={self.n} smaller than the largest motif")
        if self.n > 4096:
            raise ValueError("n above 4096 is not supported")
        object.__setattr__(self, "terms", terms)

    @property
    def motifs(self) -> list[MotifSpec]:
        return [g for g, _ in self.terms]

    @property
    def betas(self) -> np.ndarray:
        return np.array([b for _, b in self.terms])

    @property
    def max_vertices(self) -> int:
        return max(g.vertex_count for g, _ in self.terms)

    def with_n(self, n: int) -> "ModelSpec":
        return ModelSpec(n, self.terms)

    def with_betas(self, betas) -> "ModelSpec":
        return ModelSpec(self.n, tuple((g, float(b)) for (g, _), b in zip(self.terms, betas)))

    def is_edge_only(self) -> bool:
        return all(g.n_edges == 1 for g in self.motifs)

    def to_text(self) -> str:
        return f"n={self.n}; " + "; ".join(f"term={g.name or g.to_text()}:{b!r}" for g, b in self.terms)

    @classmethod
    def parse(cls, text: str) -> "ModelSpec":
        """Parse ``"n=<n>; term=<motif>:<beta>; term=..."``."""
        m = re.match(r"\s*n\s*=\s*(\d+)\s*;?", text)
        if not m:
            raise ValueError(f"model text {text!r} must start with 'n=<n>;'")
        chunks = [c.strip().rstrip(";").strip() for c in text[m.end():].split("term=")]
        if chunks and chunks[0]:
            raise ValueError(f"unexpected text {chunks[0]!r} before first term")
        terms = []
        for c in chunks[1:]:
            motif, sep, beta = c.rpartition(":")
            if not sep:
                raise ValueError(f"term {c!r} needs the form <motif>:<beta>")
            terms.append((MotifSpec.parse(motif), float(beta)))
        if not terms:
            raise ValueError("model needs at least one term")
        return cls(int(m.group(1)), tuple(terms))

    @cached_property
    def kernel(self) -> ModelKernel:
        s = len(self.terms)
        P = max([len(pin_table(g)) for g in self.motifs if g.kind == KIND_GENERIC], default=1)
        pins = np.zeros((s, P, PAD, PAD), dtype=np.int64)
        npins = np.zeros(s, dtype=np.int64)
        for t, g in enumerate(self.motifs):
            if g.kind == KIND_GENERIC:
                tab = pin_table(g)
                pins[t, : len(tab)] = tab
                npins[t] = len(tab)
        return ModelKernel(
            kinds=np.array([g.kind for g in self.motifs], dtype=np.int64),
            betas=self.betas.astype(np.float64),
            norms=np.array([float(self.n) ** (g.vertex_count - 2) for g in self.motifs]),
            nv=np.array([g.vertex_count for g in self.motifs], dtype=np.int64),
            npins=npins,
            pins=pins,
        )


@numba.njit(cache=True, nogil=True)
def nb_field(adj, n, i, j, K):
    """d_e H at e=(i,j); independent of the state of e."""
    h = 0.0
    for t in range(K.kinds.shape[0]):
        if K.kinds[t] == KIND_GENERIC:
            c = nb_pinned_generic(adj, n, K.nv[t], K.npins[t], K.pins[t], i, j)
        else:
            c = nb_pinned_fast(adj, n, K.kinds[t], i, j)
        h += K.betas[t] * c / K.norms[t]
    return h


@numba.njit(cache=True, nogil=True, inline="always")
def nb_logistic(u):
    if u >= 0:
        return 1.0 / (1.0 + math.exp(-u))
    z = math.exp(u)
    return z / (1.0 + z)


def logistic(u):
    """e^u / (1 + e^u) without overflow; works elementwise on arrays."""
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    z = np.exp(u[~pos])
    out[~pos] = z / (1.0 + z)
    return out if out.ndim else float(out)


def _check(m: ModelSpec, x: Configuration) -> None:
    if x.n != m.n:
        raise ValueError(f"configuration has n={x.n}, model has n={m.n}")


def _exact_beta(b: float) -> Fraction:
    return Fraction(repr(b))


def hamiltonian(m: ModelSpec, x: Configuration, exact: bool = False):
    """H(x); with ``exact=True`` a Fraction (beta read as its decimal repr)."""
    _check(m, x)
    if exact:
        if m.n > 8:
            raise ValueError("exact evaluation is limited to n <= 8")
        return sum(
            (_exact_beta(b) * count_motif(x, g) / Fraction(m.n) ** (g.vertex_count - 2) for g, b in m.terms),
            Fraction(0),
        )
    return float(sum(b * count_motif(x, g) / float(m.n) ** (g.vertex_count - 2) for g, b in m.terms))


def local_field(m: ModelSpec, x: Configuration, e, exact: bool = False):
    _check(m, x)
    e = EdgePair.of(*e)
    if exact:
        return sum(
            (_exact_beta(b) * count_motif_pinned(x, g, e) / Fraction(m.n) ** (g.vertex_count - 2) for g, b in m.terms),
            Fraction(0),
        )
    if e.j >= m.n:
        raise ValueError(f"edge {tuple(e)} out of range for n={m.n}")
    return float(nb_field(x.adj, m.n, e.i, e.j, m.kernel))


def second_derivative(m: ModelSpec, x: Configuration, e, f) -> float:
    _check(m, x)
    return float(
        sum(b * count_motif_double_pinned(x, g, e, f) / float(m.n) ** (g.vertex_count - 2) for g, b in m.terms)
    )


def update_probability(m: ModelSpec, x: Configuration, e) -> float:
    return logistic(local_field(m, x, e))
