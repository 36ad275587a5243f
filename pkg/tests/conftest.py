from __future__ import annotations

import itertools

import numpy as np
import pytest

from ergmlab.config import Configuration
from ergmlab.rng import RngStream


def brute_count(x: Configuration, g, e=None, f=None) -> int:
    """Injective embeddings by exhaustive permutation; optional pinned edges.

    With ``e`` (and ``f``) the graph is x with those edges forced present and
    only embeddings that place some motif edge on e (and a different one on f)
    are counted.
    """
    if e is not None and f is not None and set(e) == set(f):
        return 0
    adj = x.adj.copy()
    for p in (e, f):
        if p is not None:
            adj[p[0], p[1]] = adj[p[1], p[0]] = 1
    pins = [frozenset(p) for p in (e, f) if p is not None]
    total = 0
    for phi in itertools.permutations(range(x.n), g.vertex_count):
        images = [frozenset((phi[a], phi[b])) for a, b in g.edges]
        if not all(adj[phi[a], phi[b]] for a, b in g.edges):
            continue
        if all(pin in images for pin in pins):
            total += 1
    return total


def random_config(n: int, p: float, seed: int) -> Configuration:
    return Configuration.gnp(n, p, RngStream(seed, 99))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
