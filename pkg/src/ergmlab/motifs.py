"""Labeled (injective) subgraph counts and their edge-pinned variants.

N_G(x)        number of injective maps V(G) -> [n] sending every edge of G to an
              edge of x (automorphisms are counted separately).
N_G(x, e)     maps into x with e added, in which some edge of G lands on e.
N_G(x, e, f)  maps into x with e and f added, one edge of G on e and another on f;
              zero when e == f.

Edge, two-star and triangle have closed-form fast paths; anything else goes
through a depth-first extender over a connected vertex order.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from functools import lru_cache

import numba
import numpy as np

from .config import Configuration, EdgePair, edge_arrays

MAX_MOTIF_VERTICES = 6
PAD = MAX_MOTIF_VERTICES

KIND_EDGE, KIND_TWOSTAR, KIND_TRIANGLE, KIND_GENERIC = 0, 1, 2, 3
_INT64_LIMIT = 2**63 - 1
_INT128_LIMIT = 2**127 - 1


@dataclass(frozen=True)
class MotifSpec:
    vertex_count: int
    edges: tuple[tuple[int, int], ...]
    name: str | None = field(default=None, compare=False)

    def __post_init__(self):
        k = self.vertex_count
        if not 2 <= k <= MAX_MOTIF_VERTICES:
            raise ValueError(f"motif vertex count {k} outside [2, {MAX_MOTIF_VERTICES}]")
        canon = []
        for a, b in self.edges:
            a, b = int(a), int(b)
            if a == b:
                raise ValueError(f"motif has a loop at {a}")
            if not (0 <= a < k and 0 <= b < k):
                raise ValueError(f"motif edge ({a},{b}) outside [0,{k})")
            canon.append((min(a, b), max(a, b)))
        if len(set(canon)) != len(canon):
            raise ValueError("motif edges must be distinct")
        if not canon:
            raise ValueError("motif needs at least one edge")
        covered = {v for e in canon for v in e}
        if covered != set(range(k)):
            raise ValueError(f"isolated motif vertices {sorted(set(range(k)) - covered)}")
        if not _connected(k, canon):
            raise ValueError("motif must be connected")
        object.__setattr__(self, "edges", tuple(sorted(canon)))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def kind(self) -> int:
        if self.vertex_count == 2:
            return KIND_EDGE
        if self.vertex_count == 3:
            return KIND_TWOSTAR if self.n_edges == 2 else KIND_TRIANGLE
        return KIND_GENERIC

    @property
    def label(self) -> str:
        return self.name or self.to_text()

    def to_text(self) -> str:
        return f"V={self.vertex_count};E=" + "".join(f"({a},{b})" for a, b in self.edges)

    @classmethod
    def parse(cls, text: str) -> "MotifSpec":
        t = text.strip()
        if t.lower() in BUILTIN:
            return BUILTIN[t.lower()]
        m = re.fullmatch(r"V=(\d+);E=((?:\(\s*\d+\s*,\s*\d+\s*\))+)", t.replace(" ", ""))
        if not m:
            raise ValueError(f"cannot parse motif {text!r}; use an alias or 'V=<k>;E=(a,b)(c,d)...'")
        pairs = re.findall(r"\((\d+),(\d+)\)", m.group(2))
        return cls(int(m.group(1)), tuple((int(a), int(b)) for a, b in pairs))


def _connected(k: int, edges) -> bool:
    nbrs = {v: set() for v in range(k)}
    for a, b in edges:
        nbrs[a].add(b)
        nbrs[b].add(a)
    seen, stack = {0}, [0]
    while stack:
        for w in nbrs[stack.pop()]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == k


def _complete(k: int, name: str) -> MotifSpec:
    return MotifSpec(k, tuple(itertools.combinations(range(k), 2)), name)


EDGE = MotifSpec(2, ((0, 1),), "edge")
TWOSTAR = MotifSpec(3, ((0, 1), (0, 2)), "twostar")
TRIANGLE = MotifSpec(3, ((0, 1), (0, 2), (1, 2)), "triangle")
K4 = _complete(4, "k4")
K5 = _complete(5, "k5")
BUILTIN = {"edge": EDGE, "twostar": TWOSTAR, "triangle": TRIANGLE, "k4": K4, "k5": K5}


def _assert_builtins():
    assert (EDGE.vertex_count, EDGE.n_edges) == (2, 1)
    assert (TWOSTAR.vertex_count, TWOSTAR.n_edges) == (3, 2) and TWOSTAR.kind == KIND_TWOSTAR
    assert (TRIANGLE.vertex_count, TRIANGLE.n_edges) == (3, 3)
    assert K4.n_edges == 6 and K5.n_edges == 10


_assert_builtins()


# ---------------------------------------------------------------------------
# numba kernels


@numba.njit(cache=True, nogil=True, inline="always")
def _present(adj, u, v, ei, ej, fi, fj):
    if adj[u, v]:
        return True
    if (u == ei and v == ej) or (u == ej and v == ei):
        return True
    if (u == fi and v == fj) or (u == fj and v == fi):
        return True
    return False


@numba.njit(cache=True, nogil=True)
def nb_extend(adj, n, nv, madj, init, nfixed, ei, ej, fi, fj):
    """Count injective completions of a partial embedding.

    Positions 0..nfixed-1 are preassigned (``init``); the remaining positions
    are filled in order.  ``madj`` is the motif adjacency in position order.
    Pairs (ei,ej) and (fi,fj) count as present (use -1 for none).
    """
    for p in range(nfixed):
        for q in range(p):
            if init[p] == init[q]:
                return 0
            if madj[p, q] and not _present(adj, init[p], init[q], ei, ej, fi, fj):
                return 0
    if nfixed == nv:
        return 1
    assign = np.empty(nv, dtype=np.int64)
    for p in range(nfixed):
        assign[p] = init[p]
    cand = np.full(nv, -1, dtype=np.int64)
    d = nfixed
    count = 0
    while d >= nfixed:
        c = cand[d] + 1
        found = False
        while c < n:
            ok = True
            for q in range(d):
                a = assign[q]
                if a == c or (madj[d, q] and not _present(adj, a, c, ei, ej, fi, fj)):
                    ok = False
                    break
            if ok:
                found = True
                break
            c += 1
        if not found:
            cand[d] = -1
            d -= 1
            continue
        cand[d] = c
        assign[d] = c
        if d == nv - 1:
            count += 1
        else:
            d += 1
    return count


@numba.njit(cache=True, nogil=True)
def nb_common(adj, n, i, j):
    c = 0
    for k in range(n):
        c += adj[i, k] & adj[j, k]
    return c


@numba.njit(cache=True, nogil=True)
def nb_degree(adj, n, i):
    d = 0
    for k in range(n):
        d += adj[i, k]
    return d


@numba.njit(cache=True, nogil=True)
def nb_pinned_fast(adj, n, kind, i, j):
    if kind == KIND_EDGE:
        return 2
    if kind == KIND_TWOSTAR:
        missing = 1 - np.int64(adj[i, j])
        di = nb_degree(adj, n, i) + missing
        dj = nb_degree(adj, n, j) + missing
        return 2 * ((di - 1) + (dj - 1))
    return 6 * nb_common(adj, n, i, j)


@numba.njit(cache=True, nogil=True)
def nb_pinned_generic(adj, n, nv, npins, pmadj, i, j):
    init = np.empty(2, dtype=np.int64)
    init[0] = i
    init[1] = j
    total = 0
    for p in range(npins):
        total += nb_extend(adj, n, nv, pmadj[p], init, 2, i, j, -1, -1)
    return total


@numba.njit(cache=True, nogil=True)
def nb_count_fast(adj, n, kind):
    if kind == KIND_EDGE:
        c = 0
        for i in range(n):
            for j in range(i + 1, n):
                c += adj[i, j]
        return 2 * c
    if kind == KIND_TWOSTAR:
        c = 0
        for i in range(n):
            d = nb_degree(adj, n, i)
            c += d * (d - 1)
        return c
    c = 0
    for i in range(n):
        for j in range(i + 1, n):
            if adj[i, j]:
                c += nb_common(adj, n, i, j)
    return 2 * c


# ---------------------------------------------------------------------------
# orderings for the generic extender


def _bfs_order(k: int, edges, start: list[int]) -> list[int]:
    nbrs = {v: set() for v in range(k)}
    for a, b in edges:
        nbrs[a].add(b)
        nbrs[b].add(a)
    order = list(start)
    seen = set(order)
    i = 0
    while len(order) < k:
        if i < len(order):
            for w in sorted(nbrs[order[i]]):
                if w not in seen:
                    seen.add(w)
                    order.append(w)
            i += 1
        else:  # unreachable for connected motifs
            w = min(set(range(k)) - seen)
            seen.add(w)
            order.append(w)
    return order


def _reindexed_adjacency(k: int, edges, order) -> np.ndarray:
    pos = {v: p for p, v in enumerate(order)}
    madj = np.zeros((PAD, PAD), dtype=np.int64)
    for a, b in edges:
        madj[pos[a], pos[b]] = madj[pos[b], pos[a]] = 1
    return madj


@lru_cache(maxsize=None)
def unpinned_table(g: MotifSpec) -> np.ndarray:
    return _reindexed_adjacency(g.vertex_count, g.edges, _bfs_order(g.vertex_count, g.edges, [0]))


@lru_cache(maxsize=None)
def pin_table(g: MotifSpec) -> np.ndarray:
    """One reindexed adjacency per (motif edge, orientation): 2|E| pins."""
    tabs = []
    for a, b in g.edges:
        for u, v in ((a, b), (b, a)):
            order = _bfs_order(g.vertex_count, g.edges, [u, v])
            tabs.append(_reindexed_adjacency(g.vertex_count, g.edges, order))
    return np.array(tabs, dtype=np.int64)


@lru_cache(maxsize=None)
def double_pin_table(g: MotifSpec):
    """For ordered pairs of distinct motif edges with orientations.

    Each entry is (slots, madj, nfixed) where ``slots`` lists, per fixed
    position, which endpoint of (e, f) it takes: 0=e.i 1=e.j 2=f.i 3=f.j.
    Motif vertices shared by the two motif edges appear once; the caller
    checks the graph endpoints agree.
    """
    out = []
    for g1, g2 in itertools.permutations(g.edges, 2):
        for u1, v1 in ((g1[0], g1[1]), (g1[1], g1[0])):
            for u2, v2 in ((g2[0], g2[1]), (g2[1], g2[0])):
                # motif vertex -> required endpoint slots
                req: dict[int, list[int]] = {}
                for vert, slot in ((u1, 0), (v1, 1), (u2, 2), (v2, 3)):
                    req.setdefault(vert, []).append(slot)
                fixed = list(dict.fromkeys([u1, v1, u2, v2]))
                order = _bfs_order(g.vertex_count, g.edges, fixed)
                madj = _reindexed_adjacency(g.vertex_count, g.edges, order)
                out.append((tuple(tuple(req[v]) for v in fixed), madj, len(fixed)))
    return out


# ---------------------------------------------------------------------------
# public API


def _check_fits(x: Configuration, g: MotifSpec) -> None:
    if g.vertex_count > x.n:
        raise ValueError(f"motif with {g.vertex_count} vertices does not fit in n={x.n}")


def _norm_edge(e, n: int) -> EdgePair:
    e = EdgePair.of(*e)
    if e.j >= n:
        raise ValueError(f"edge {tuple(e)} out of range for n={n}")
    return e


def count_motif(x: Configuration, g: MotifSpec) -> int:
    """N_G(x)."""
    _check_fits(x, g)
    if math.perm(x.n, g.vertex_count) > _INT64_LIMIT:
        raise OverflowError(f"N_G may exceed 64-bit range at n={x.n}, |V|={g.vertex_count}")
    if g.kind != KIND_GENERIC:
        return int(nb_count_fast(x.adj, x.n, g.kind))
    init = np.zeros(1, dtype=np.int64)
    return int(nb_extend(x.adj, x.n, g.vertex_count, unpinned_table(g), init, 0, -1, -1, -1, -1))


def count_motif_pinned(x: Configuration, g: MotifSpec, e) -> int:
    """N_G(x, e); does not depend on whether e is present in x."""
    _check_fits(x, g)
    e = _norm_edge(e, x.n)
    if g.kind != KIND_GENERIC:
        return int(nb_pinned_fast(x.adj, x.n, g.kind, e.i, e.j))
    pins = pin_table(g)
    return int(nb_pinned_generic(x.adj, x.n, g.vertex_count, len(pins), pins, e.i, e.j))


def count_motif_double_pinned(x: Configuration, g: MotifSpec, e, f) -> int:
    """N_G(x, e, f), with N_G(x, e, e) = 0."""
    _check_fits(x, g)
    e, f = _norm_edge(e, x.n), _norm_edge(f, x.n)
    if e == f or g.n_edges < 2:
        return 0
    if g.kind == KIND_TWOSTAR:
        return 2 if e.shares_vertex(f) else 0
    if g.kind == KIND_TRIANGLE:
        shared = {e.i, e.j} & {f.i, f.j}
        if not shared:
            return 0
        (a,) = {e.i, e.j} - shared
        (b,) = {f.i, f.j} - shared
        return 6 * int(x.adj[a, b])
    return _double_pinned_generic(x, g, e, f)


def _double_pinned_generic(x: Configuration, g: MotifSpec, e: EdgePair, f: EdgePair) -> int:
    ends = (e.i, e.j, f.i, f.j)
    total = 0
    init = np.zeros(4, dtype=np.int64)
    for slots, madj, nfixed in double_pin_table(g):
        ok = True
        for p, group in enumerate(slots):
            verts = {ends[s] for s in group}
            if len(verts) != 1:
                ok = False
                break
            init[p] = verts.pop()
        if not ok:
            continue
        total += nb_extend(x.adj, x.n, g.vertex_count, madj, init, nfixed, e.i, e.j, f.i, f.j)
    return int(total)


def complete_graph_pinned_count(g: MotifSpec, n: int) -> int:
    """N_G(K_n, e) = 2|E| C(n-2, |V|-2) (|V|-2)!, exact."""
    if g.vertex_count > n:
        raise ValueError(f"motif with {g.vertex_count} vertices does not fit in n={n}")
    value = 2 * g.n_edges * math.comb(n - 2, g.vertex_count - 2) * math.factorial(g.vertex_count - 2)
    if value > _INT128_LIMIT:
        raise OverflowError(f"pinned count on K_{n} exceeds 128-bit range")
    return value


def normalized_pinned_count(x: Configuration, g: MotifSpec, e) -> float:
    """r_G(x, e) = (N_G(x,e) / (2|E| n^{|V|-2}))^{1/(|E|-1)}; 1 for the edge motif."""
    if g.n_edges == 1:
        return 1.0
    N = count_motif_pinned(x, g, e)
    return (N / (2 * g.n_edges * float(x.n) ** (g.vertex_count - 2))) ** (1.0 / (g.n_edges - 1))


@lru_cache(maxsize=None)
def connected_motifs(max_vertices: int, min_edges: int = 2) -> tuple[MotifSpec, ...]:
    """Connected graphs on 2..max_vertices vertices up to isomorphism."""
    found: dict[tuple, MotifSpec] = {}
    for k in range(2, max_vertices + 1):
        pairs = list(itertools.combinations(range(k), 2))
        perms = list(itertools.permutations(range(k)))
        for r in range(max(min_edges, k - 1), len(pairs) + 1):
            for es in itertools.combinations(pairs, r):
                if {v for e in es for v in e} != set(range(k)) or not _connected(k, es):
                    continue
                canon = min(
                    tuple(sorted((min(p[a], p[b]), max(p[a], p[b])) for a, b in es)) for p in perms
                )
                key = (k, canon)
                if key not in found:
                    found[key] = MotifSpec(k, canon)
    return tuple(found.values())


def all_pinned_counts(x: Configuration, g: MotifSpec) -> np.ndarray:
    """N_G(x, e) for every edge index e."""
    I, J = edge_arrays(x.n)
    a = x.adj.astype(np.int64)
    if g.kind == KIND_TRIANGLE:
        return 6 * (a @ a)[I, J]
    if g.kind == KIND_TWOSTAR:
        deg = a.sum(axis=1)
        miss = 1 - a[I, J]
        return 2 * ((deg[I] + miss - 1) + (deg[J] + miss - 1))
    if g.kind == KIND_EDGE:
        return np.full(I.shape[0], 2, dtype=np.int64)
    pins = pin_table(g)
    return np.array(
        [nb_pinned_generic(x.adj, x.n, g.vertex_count, len(pins), pins, i, j) for i, j in zip(I, J)],
        dtype=np.int64,
    )


def t_delta_membership(x: Configuration, motif_bound: int, p_star: float, delta: float):
    """(member, r_min, r_max) over connected motifs with <= motif_bound vertices and |E| >= 2."""
    if not 2 <= motif_bound <= 5:
        raise ValueError(f"motif bound a={motif_bound} unsupported (need 2 <= a <= 5)")
    if not 0.0 < p_star < 1.0:
        raise ValueError("p_star must lie in (0,1)")
    if delta <= 0:
        raise ValueError("delta must be positive")
    motifs = [g for g in connected_motifs(motif_bound) if g.vertex_count <= x.n]
    if not motifs:
        raise ValueError(f"no motif with |E| >= 2 fits a={motif_bound}")
    r_min, r_max = math.inf, -math.inf
    for g in motifs:
        N = all_pinned_counts(x, g)
        r = (N / (2 * g.n_edges * float(x.n) ** (g.vertex_count - 2))) ** (1.0 / (g.n_edges - 1))
        r_min = min(r_min, float(r.min()))
        r_max = max(r_max, float(r.max()))
    member = p_star - delta < r_min and r_max < p_star + delta
    return member, r_min, r_max
