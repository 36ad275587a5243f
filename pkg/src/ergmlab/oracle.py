"""Exact ground truth at tiny n by enumerating all 2^M graphs.

State codes are the integers of ``Configuration.to_int``: bit k is edge k.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.sparse as sp
from scipy.stats import chi2

from .artifacts import csv_text, json_text
from .config import Configuration, edge_arrays, edge_index, n_edges
from .dynamics import advance_chain, run_chain
from .hamiltonian import ModelSpec, hamiltonian, local_field, logistic, nb_field
from .motifs import MotifSpec
from .rng import RngStream

MAX_ENUM_N = 7
MAX_KERNEL_N = 6
MAX_RATIONAL_N = 5


class ConvergenceError(RuntimeError):
    def __init__(self, msg: str, residual: float, iterations: int):
        super().__init__(f"{msg} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


def motif_masks(g: MotifSpec, n: int) -> dict[int, int]:
    """Edge bitmask of every injective image of ``g`` in K_n, with multiplicity."""
    out: Counter = Counter()
    for phi in itertools.permutations(range(n), g.vertex_count):
        mask = 0
        for a, b in g.edges:
            mask |= 1 << edge_index((min(phi[a], phi[b]), max(phi[a], phi[b])), n)
        out[mask] += 1
    return dict(out)


@numba.njit(cache=True)
def _energies(nstates, masks, weights):
    H = np.zeros(nstates)
    for s in range(nstates):
        h = 0.0
        for t in range(masks.shape[0]):
            if s & masks[t] == masks[t]:
                h += weights[t]
        H[s] = h
    return H


def all_energies(m: ModelSpec) -> np.ndarray:
    """H(x) for every state code."""
    acc: dict[int, float] = {}
    for g, b in m.terms:
        scale = b / float(m.n) ** (g.vertex_count - 2)
        for mask, mult in motif_masks(g, m.n).items():
            acc[mask] = acc.get(mask, 0.0) + scale * mult
    masks = np.array(sorted(acc), dtype=np.int64)
    weights = np.array([acc[k] for k in sorted(acc)])
    return _energies(1 << n_edges(m.n), masks, weights)


@dataclass
class ExactGibbs:
    model: ModelSpec
    table: np.ndarray
    log_Z: float
    energies: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.model.n

    @property
    def M(self) -> int:
        return n_edges(self.model.n)

    @property
    def free_energy(self) -> float:
        return self.log_Z / self.n**2

    def bits(self) -> np.ndarray:
        """uint8[2^M, M] bit matrix of all states."""
        codes = np.arange(self.table.shape[0], dtype=np.int64)
        return ((codes[:, None] >> np.arange(self.M)) & 1).astype(np.uint8)

    def dump_csv(self) -> str:
        rows = ((Configuration.from_int(self.n, s).to_hex(), float(p)) for s, p in enumerate(self.table))
        return csv_text(["config_hex", "probability"], rows)


def enumerate_gibbs(m: ModelSpec) -> ExactGibbs:
    if m.n > MAX_ENUM_N:
        raise ValueError(f"exact enumeration needs n <= {MAX_ENUM_N} (2^{n_edges(m.n)} states requested)")
    H = all_energies(m)
    w = np.exp(H - H.max())
    z = math.fsum(w)
    return ExactGibbs(m, w / z, float(H.max() + math.log(z)), H)


def _edge_bits(g: ExactGibbs, edges) -> list[int]:
    ks = [edge_index(e if e[0] < e[1] else (e[1], e[0]), g.n) for e in edges]
    if len(set(ks)) != len(ks):
        raise ValueError("edges must be distinct")
    return ks


def exact_marginal(g: ExactGibbs, edges, values) -> float:
    """P(X_e1 = a1, ..., X_ek = ak)."""
    edges, values = list(edges), list(values)
    if len(edges) != len(values):
        raise ValueError("edges and values differ in length")
    if not edges:
        return 1.0
    if any(v not in (0, 1) for v in values):
        raise ValueError("values must be 0 or 1")
    codes = np.arange(g.table.shape[0], dtype=np.int64)
    sel = np.ones(codes.shape[0], dtype=bool)
    for k, v in zip(_edge_bits(g, edges), values):
        sel &= ((codes >> k) & 1) == v
    return math.fsum(g.table[sel])


def exact_conditional(g: ExactGibbs, e, cond_edges, cond_values) -> float:
    """P(X_e = 1 | X_A = a)."""
    den = exact_marginal(g, cond_edges, cond_values)
    return exact_marginal(g, [e, *cond_edges], [1, *cond_values]) / den


def exact_k_correlation(g: ExactGibbs, edges) -> float:
    """E[prod (X_e - E X_e)]."""
    ks = _edge_bits(g, edges)
    codes = np.arange(g.table.shape[0], dtype=np.int64)
    prod = np.ones(codes.shape[0])
    for k in ks:
        x = ((codes >> k) & 1).astype(float)
        prod *= x - float(g.table @ x)
    return float(g.table @ prod)


# ---------------------------------------------------------------- kernel


@numba.njit(cache=True)
def _all_fields(n, M, I, J, K):
    nst = 1 << M
    F = np.empty((nst, M))
    adj = np.zeros((n, n), dtype=np.uint8)
    for s in range(nst):
        for k in range(M):
            v = (s >> k) & 1
            adj[I[k], J[k]] = v
            adj[J[k], I[k]] = v
        for k in range(M):
            F[s, k] = nb_field(adj, n, I[k], J[k], K)
    return F


def flip_rates(g: ExactGibbs) -> np.ndarray:
    """P(x, x^e) for every state and edge, including the 1/M selection factor."""
    m = g.model
    if m.n > MAX_KERNEL_N:
        raise ValueError(f"transition kernel needs n <= {MAX_KERNEL_N}")
    I, J = edge_arrays(m.n)
    F = _all_fields(m.n, g.M, I, J, m.kernel)
    on = g.bits().astype(bool)
    p1 = logistic(F)
    return np.where(on, 1.0 - p1, p1) / g.M


def detailed_balance_check(g: ExactGibbs, perturb: tuple[int, int, float] | None = None) -> float:
    """max |pi(x) P(x,x^e) - pi(x^e) P(x^e,x)|; ``perturb=(state, edge, delta)`` injects a fault."""
    R = flip_rates(g)
    if perturb is not None:
        s, k, delta = perturb
        R[s, k] += delta
    codes = np.arange(R.shape[0], dtype=np.int64)
    worst = 0.0
    for k in range(g.M):
        y = codes ^ (1 << k)
        v = np.abs(g.table * R[:, k] - g.table[y] * R[y, k])
        worst = max(worst, float(v.max()))
    return worst


def detailed_balance_rational(m: ModelSpec):
    """The same maximum in exact arithmetic (sympy); a sympy number, exactly 0 when balanced."""
    import sympy

    if m.n > MAX_RATIONAL_N:
        raise ValueError(f"rational mode needs n <= {MAX_RATIONAL_N}")
    M = n_edges(m.n)
    states = [Configuration.from_int(m.n, s) for s in range(1 << M)]
    H = [sympy.Rational(hamiltonian(m, x, exact=True)) for x in states]
    Z = sympy.Add(*[sympy.exp(h) for h in H])
    I, J = edge_arrays(m.n)

    def rate(s, k):
        h = sympy.Rational(local_field(m, states[s], (int(I[k]), int(J[k])), exact=True))
        up = sympy.exp(h) / (1 + sympy.exp(h))
        return (1 - up if (s >> k) & 1 else up) / M

    worst = sympy.Integer(0)
    for s in range(1 << M):
        for k in range(M):
            t = s ^ (1 << k)
            if t < s:
                continue
            diff = sympy.simplify((sympy.exp(H[s]) * rate(s, k) - sympy.exp(H[t]) * rate(t, k)) / Z)
            worst = sympy.Max(worst, sympy.Abs(diff))
    return worst


def transition_matrix(g: ExactGibbs) -> sp.csr_matrix:
    R = flip_rates(g)
    nst, M = R.shape
    codes = np.arange(nst, dtype=np.int64)
    rows = np.concatenate([np.repeat(codes, M), codes])
    cols = np.concatenate([(codes[:, None] ^ (1 << np.arange(M))).ravel(), codes])
    vals = np.concatenate([R.ravel(), 1.0 - R.sum(axis=1)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(nst, nst))


@dataclass
class SpectralReport:
    gap: float
    iterations: int
    residual: float
    eigenvector: np.ndarray = field(repr=False)

    def to_json(self) -> str:
        return json_text({"gap": self.gap, "iterations": self.iterations, "residual": self.residual})


def exact_spectral_gap(g: ExactGibbs, tol: float = 1e-8, max_iter: int = 20000, block: int | None = None, seed: int = 0) -> SpectralReport:
    """1 - lambda_2 by block power iteration deflated against sqrt(pi).

    Works on S = D^{1/2} P D^{-1/2} (symmetric because P is reversible) with a
    Rayleigh-Ritz step each iteration.  The heat-bath kernel is positive
    semidefinite, so the dominant remaining eigenvalue is lambda_2.
    """
    P = transition_matrix(g)
    r = np.sqrt(g.table)
    S = sp.diags(r) @ P @ sp.diags(1.0 / r)
    S = ((S + S.T) * 0.5).tocsr()
    nst = S.shape[0]
    b = min(block or g.M + 8, nst - 1)
    q = r / np.linalg.norm(r)
    rng = np.random.default_rng(seed)
    V = rng.standard_normal((nst, b))
    theta_old = np.inf
    res = np.inf
    for it in range(1, max_iter + 1):
        V -= np.outer(q, q @ V)
        V, _ = np.linalg.qr(V)
        W = S @ V
        W -= np.outer(q, q @ W)
        T = V.T @ W
        vals, vecs = np.linalg.eigh((T + T.T) * 0.5)
        order = np.argsort(vals)[::-1]
        vals, vecs = vals[order], vecs[:, order]
        V = V @ vecs
        W = W @ vecs
        theta = vals[0]
        res = float(np.linalg.norm(W[:, 0] - theta * V[:, 0]))
        gap = 1.0 - theta
        if res < tol * max(gap, 1e-300) and abs(theta - theta_old) < tol * gap * 1e-2:
            return SpectralReport(float(gap), it, res, V[:, 0] / r)
        theta_old = theta
        V = W
    raise ConvergenceError("spectral gap iteration did not converge", res, max_iter)


def dirichlet_form(g: ExactGibbs, f, h=None) -> float:
    """E(f,h) = (1/M) sum_x sum_e c(x,e) (f(x^e)-f(x)) (h(x^e)-h(x)) pi(x).

    No factor 1/2, so E(f,f) = 2 <f, (I-P) f>_pi and inf E(f,f)/Var(f) = 2 gamma.
    """
    f = np.asarray(f, dtype=float)
    h = f if h is None else np.asarray(h, dtype=float)
    R = flip_rates(g)
    codes = np.arange(R.shape[0], dtype=np.int64)
    tot = 0.0
    for k in range(g.M):
        y = codes ^ (1 << k)
        tot += float(np.sum(g.table * R[:, k] * (f[y] - f) * (h[y] - h)))
    return tot


def variance(g: ExactGibbs, f) -> float:
    f = np.asarray(f, dtype=float)
    mu = float(g.table @ f)
    return float(g.table @ (f - mu) ** 2)


def edge_function(g: ExactGibbs, e) -> np.ndarray:
    """Table of x -> x_e."""
    k = edge_index(e, g.n)
    return ((np.arange(g.table.shape[0], dtype=np.int64) >> k) & 1).astype(float)


def histogram_check(m: ModelSpec, steps: int = 1_000_000, burn_in: int = 100_000, seed: int = 42, thin: int = 50) -> dict:
    """Glauber histogram against the exact table: chi-square on a thinned subsample, TV on all steps."""
    g = enumerate_gibbs(m)
    x0 = Configuration.full(m.n)
    advance_chain(m, x0, burn_in, RngStream(seed, 1))
    tr = run_chain(m, x0, steps, 1, seed, stream_id=0, track_state=True)
    states = tr.column("state")[1:]
    nst = g.table.shape[0]
    full = np.bincount(states, minlength=nst)
    tv = 0.5 * float(np.abs(full / full.sum() - g.table).sum())
    sub = np.bincount(states[::thin], minlength=nst)
    exp = g.table * sub.sum()
    stat = float(((sub - exp) ** 2 / exp).sum())
    pval = float(chi2.sf(stat, nst - 1))
    return {"tv": tv, "chi2": stat, "dof": nst - 1, "p_value": pval, "samples": int(sub.sum()),
            "chi2_pass": pval > 0.01, "tv_pass": tv < 0.02}
