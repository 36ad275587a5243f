"""Mean-field fixed points and the Dobrushin-type bounds.

    psi(p) = sum_i 2 beta_i |E_i| p^{|E_i|-1}
    phi(p) = logistic(psi(p))

A model is subcritical when phi(p) = p has exactly one root and phi' < 1 there.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .hamiltonian import ModelSpec, logistic
from .motifs import complete_graph_pinned_count

SUBCRITICAL = "Subcritical"
SUPERCRITICAL = "Supercritical"
NEAR_CRITICAL = "NearCritical"

EPS_CRIT = 1e-3
EPS_TANGENT = 1e-6
DEFAULT_GRID = 10_000


@dataclass
class PhaseReport:
    roots: list[tuple[float, float]]
    classification: str
    p_star: float | None
    dobrushin_sum: float
    in_DU: bool
    l1_bound: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["roots"] = [[p, dp] for p, dp in self.roots]
        return d


def _coeffs(m: ModelSpec) -> tuple[np.ndarray, np.ndarray]:
    c = np.array([2.0 * b * g.n_edges for g, b in m.terms])
    k = np.array([g.n_edges for g, _ in m.terms])
    return c, k


def _check_p(p) -> None:
    if np.any(np.asarray(p) < 0) or np.any(np.asarray(p) > 1):
        raise ValueError(f"p must lie in [0,1], got {p}")


def psi(m: ModelSpec, p):
    _check_p(p)
    c, k = _coeffs(m)
    p = np.asarray(p, dtype=float)
    out = sum(ci * p ** (ki - 1) for ci, ki in zip(c, k))
    return float(out) if np.ndim(out) == 0 else out


def psi_prime(m: ModelSpec, p):
    c, k = _coeffs(m)
    p = np.asarray(p, dtype=float)
    out = sum(ci * (ki - 1) * p ** (ki - 2) for ci, ki in zip(c, k) if ki >= 2)
    out = out + np.zeros_like(p)
    return float(out) if np.ndim(out) == 0 else out


def phi_and_derivative(m: ModelSpec, p):
    """(phi(p), phi'(p)) with phi' = logistic'(psi) * psi'."""
    _check_p(p)
    u = psi(m, p)
    f = logistic(u)
    d = f * (1.0 - f) * psi_prime(m, p)
    return f, d


def dobrushin_sum(m: ModelSpec) -> tuple[float, bool]:
    s = 0.5 * sum(b * g.n_edges * (g.n_edges - 1) for g, b in m.terms)
    return s, s < 1.0


def l1_norm_bound(m: ModelSpec, n: int | None = None) -> float:
    """Common row sum of the L matrix: (1/4) sum_i beta_i (|E_i|-1) N_{G_i}(K_n, f) / n^{|V_i|-2}."""
    n = m.n if n is None else n
    if n < m.max_vertices:
        raise ValueError(f"n={n} smaller than the largest motif")
    return 0.25 * sum(
        b * (g.n_edges - 1) * complete_graph_pinned_count(g, n) / float(n) ** (g.vertex_count - 2)
        for g, b in m.terms
    )


def _bisect(g, lo: float, hi: float, glo: float) -> float:
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if abs(gm) < 1e-12 or hi - lo < 1e-15:
            return mid
        if (gm > 0) == (glo > 0):
            lo, glo = mid, gm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _golden_min(h, lo: float, hi: float) -> float:
    inv = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - inv * (b - a), a + inv * (b - a)
    for _ in range(100):
        if h(c) < h(d):
            b = d
        else:
            a = c
        c, d = b - inv * (b - a), a + inv * (b - a)
    return 0.5 * (a + b)


def find_roots(m: ModelSpec, grid: int = DEFAULT_GRID) -> tuple[list[float], list[float]]:
    """Sign-change roots of phi(p) - p and tangential near-roots."""
    ps = np.linspace(0.0, 1.0, grid + 1)
    gs = phi_and_derivative(m, ps)[0] - ps

    def g(p):
        return float(phi_and_derivative(m, p)[0]) - p

    roots = []
    for k in range(grid):
        a, b = gs[k], gs[k + 1]
        if a == 0.0:
            roots.append(float(ps[k]))
        elif a * b < 0:
            roots.append(_bisect(g, float(ps[k]), float(ps[k + 1]), float(a)))
    if gs[-1] == 0.0:
        roots.append(1.0)

    # touching zero without crossing: local extremum of g with |g| tiny
    tangents = []
    absg = np.abs(gs)
    for k in range(1, grid):
        if absg[k] < EPS_TANGENT and absg[k] <= absg[k - 1] and absg[k] <= absg[k + 1]:
            if gs[k - 1] * gs[k + 1] > 0 and gs[k] * gs[k - 1] > 0:
                lo, hi = float(ps[k - 1]), float(ps[k + 1])
                p0 = _golden_min(lambda p: abs(g(p)), lo, hi)
                if all(abs(p0 - r) > 2.0 / grid for r in roots):
                    tangents.append(p0)
    return sorted(roots), sorted(tangents)


def classify(m: ModelSpec, grid: int = DEFAULT_GRID, eps_crit: float = EPS_CRIT) -> PhaseReport:
    if grid < 1000:
        raise ValueError("grid must be at least 1000")
    if not 0 < eps_crit < 0.1:
        raise ValueError("eps_crit must lie in (0, 0.1)")
    roots, tangents = find_roots(m, grid)
    all_roots = sorted(roots + tangents)
    report = [(float(p), float(phi_and_derivative(m, p)[1])) for p in all_roots]
    stable = [r for r in report if r[1] < 1.0 - eps_crit]
    # a tangential root has phi' ~ 1, so it can never count as stable
    if len(report) == 1 and len(stable) == 1:
        cls = SUBCRITICAL
    elif len(stable) >= 2:
        cls = SUPERCRITICAL
    else:
        cls = NEAR_CRITICAL
    ds, du = dobrushin_sum(m)
    return PhaseReport(
        roots=report,
        classification=cls,
        p_star=report[0][0] if cls == SUBCRITICAL else None,
        dobrushin_sum=ds,
        in_DU=du,
        l1_bound=l1_norm_bound(m),
    )
