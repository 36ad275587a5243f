from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergmlab.config import (
    MAX_N,
    Configuration,
    EdgePair,
    edge_arrays,
    edge_from_index,
    edge_index,
    hamming_distance,
    meet_join,
    n_edges,
    partial_order_leq,
)
from ergmlab.rng import RngStream

from conftest import random_config


def test_edge_index_examples():
    assert edge_index((0, 1), 4) == 0
    assert edge_index((2, 3), 4) == 5
    assert [tuple(edge_from_index(k, 4)) for k in range(6)] == [(0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3)]


@pytest.mark.parametrize("n", [2, 3, 5, 17, 64])
def test_edge_index_bijection(n):
    seen = set()
    for j in range(n):
        for i in range(j):
            k = edge_index((i, j), n)
            assert edge_from_index(k, n) == (i, j)
            seen.add(k)
    assert seen == set(range(n_edges(n)))
    I, J = edge_arrays(n)
    assert all(edge_index((I[k], J[k]), n) == k for k in range(n_edges(n)))


def test_edge_index_bijection_exhaustive_up_to_64():
    for n in range(2, 65):
        I, J = edge_arrays(n)
        k = J * (J - 1) // 2 + I
        assert np.array_equal(k, np.arange(n_edges(n)))
        assert np.all(I < J)


@pytest.mark.parametrize("bad", [(1, 1), (-1, 2), (0, 4), (3, 2)])
def test_edge_index_rejects_bad_pairs(bad):
    with pytest.raises(ValueError):
        edge_index(bad, 4)


def test_edgepair_canonical():
    assert EdgePair.of(3, 1) == (1, 3)
    with pytest.raises(ValueError):
        EdgePair.of(2, 2)
    assert EdgePair.of(0, 1).shares_vertex(EdgePair.of(1, 2))
    assert not EdgePair.of(0, 1).shares_vertex(EdgePair.of(2, 3))


def test_size_limits():
    with pytest.raises(ValueError):
        Configuration(1)
    with pytest.raises(ValueError):
        Configuration(MAX_N + 1)


def test_hamming_examples():
    full, empty = Configuration.full(4), Configuration.empty(4)
    assert hamming_distance(full, full) == 0
    assert hamming_distance(full, empty) == 6
    y = full.with_edge((1, 2), 0)
    assert hamming_distance(full, y) == 1
    with pytest.raises(ValueError):
        hamming_distance(full, Configuration.full(5))


def test_partial_order_examples():
    x = random_config(6, 0.5, 1)
    assert partial_order_leq(Configuration.empty(6), x)
    e = x.edges()[0]
    smaller = x.with_edge(e, 0)
    assert partial_order_leq(smaller, x) and not partial_order_leq(x, smaller)
    a = Configuration.from_edges(4, [(0, 1)])
    b = Configuration.from_edges(4, [(2, 3)])
    assert not partial_order_leq(a, b) and not partial_order_leq(b, a)


def test_meet_join():
    full, empty = Configuration.full(5), Configuration.empty(5)
    assert meet_join(full, empty) == (empty, full)
    x, y = random_config(7, 0.4, 2), random_config(7, 0.6, 3)
    assert meet_join(x, x) == (x, x)
    lo, hi = meet_join(x, y)
    assert partial_order_leq(lo, x) and partial_order_leq(x, hi)
    assert hamming_distance(x, y) == hamming_distance(lo, hi)
    assert lo.is_consistent() and hi.is_consistent()


@given(st.integers(2, 12), st.integers(0, 2**32), st.integers(0, 2**32), st.integers(0, 2**32))
@settings(max_examples=60, deadline=None)
def test_hamming_is_a_metric(n, s1, s2, s3):
    x, y, z = (random_config(n, 0.5, s) for s in (s1, s2, s3))
    assert hamming_distance(x, y) == hamming_distance(y, x)
    assert (hamming_distance(x, y) == 0) == (x == y)
    assert hamming_distance(x, z) <= hamming_distance(x, y) + hamming_distance(y, z)
    e = edge_from_index(s1 % n_edges(n), n)
    d0 = hamming_distance(x, y)
    x.flip(e)
    assert abs(hamming_distance(x, y) - d0) == 1


def test_views_stay_consistent_under_random_flips():
    rng = RngStream(5, 0)
    x = Configuration.empty(13)
    for _ in range(3000):
        x.flip(edge_from_index(rng.index(x.M), 13))
    assert x.is_consistent()
    assert x.edge_count() == int(x.adj.sum()) // 2


def test_hex_round_trip_and_format():
    x = Configuration.from_edges(4, [(0, 1), (2, 3)])
    assert x.to_hex() == "n=4;21"
    assert Configuration.from_hex("n=4;21") == x
    for s in range(20):
        y = random_config(9, 0.3, s)
        assert Configuration.from_hex(y.to_hex()) == y
        assert Configuration.from_int(9, y.to_int()) == y
    with pytest.raises(ValueError):
        Configuration.from_hex("4;21")


def test_gnp_uses_one_uniform_per_edge():
    rng = RngStream(3, 0)
    x = Configuration.gnp(10, 0.3, rng)
    assert rng.counter == n_edges(10)
    u = RngStream(3, 0).uniforms(n_edges(10))
    assert np.array_equal(x.bits, (u < 0.3).astype(np.uint8))


def test_bits_validation():
    with pytest.raises(ValueError):
        Configuration(4, np.zeros(5))
    with pytest.raises(ValueError):
        Configuration(4, np.full(6, 2))
