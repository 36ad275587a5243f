"""Heat-bath Glauber dynamics and its couplings.

Every step draws an edge index I = floor(u1 * M) and a threshold U = u2 from
the stream, in that order, and sets x_I = [U < logistic(d_I H(x))].  The two
draws are consumed even when nothing changes, so replicas that share a stream
see the same (I, U) sequence; that is the grand coupling.
"""

from __future__ import annotations

import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .artifacts import atomic_write_text, build_id, csv_text, json_text
from .config import Configuration, edge_arrays, nb_set_edge
from .hamiltonian import ModelSpec, nb_field, nb_logistic
from .phase import psi
from .rng import RngStream, nb_index, nb_uniform

_ONE = np.uint64(1)


# ---------------------------------------------------------------- kernels


@numba.njit(cache=True, nogil=True)
def nb_run(adj, bits, I, J, n, K, key, c, steps, every, out_ec, out_code, track_code):
    """Single chain.  Records edge count (and the state code if asked) every ``every`` steps."""
    M = bits.shape[0]
    ec = 0
    code = np.int64(0)
    for k in range(M):
        ec += bits[k]
        if track_code and bits[k]:
            code |= np.int64(1) << k
    out_ec[0] = ec
    if track_code:
        out_code[0] = code
    s = 0
    for t in range(1, steps + 1):
        k = nb_index(nb_uniform(key, c), M)
        c += _ONE
        u = nb_uniform(key, c)
        c += _ONE
        v = 1 if u < nb_logistic(nb_field(adj, n, I[k], J[k], K)) else 0
        if v != bits[k]:
            ec += 1 if v else -1
            if track_code:
                code ^= np.int64(1) << k
            nb_set_edge(adj, bits, I, J, k, v)
        if t % every == 0:
            s += 1
            out_ec[s] = ec
            if track_code:
                out_code[s] = code
    return c


@numba.njit(cache=True, nogil=True)
def nb_pair(ax, bx, ay, by, I, J, n, K, key, c, steps, every, out_d, stop):
    """Two grand-coupled chains.  Returns (counter, coalescence step or -1, order violations).

    Violations count steps after which bx[I] > by[I]; starting from x <= y this
    is the full order check because only coordinate I can change.
    """
    M = bx.shape[0]
    d = 0
    for k in range(M):
        d += bx[k] != by[k]
    out_d[0] = d
    tau = 0 if d == 0 else -1
    viol = 0
    s = 0
    for t in range(1, steps + 1):
        k = nb_index(nb_uniform(key, c), M)
        c += _ONE
        u = nb_uniform(key, c)
        c += _ONE
        vx = 1 if u < nb_logistic(nb_field(ax, n, I[k], J[k], K)) else 0
        if d == 0:
            vy = vx
        else:
            vy = 1 if u < nb_logistic(nb_field(ay, n, I[k], J[k], K)) else 0
        before = bx[k] != by[k]
        if vx != bx[k]:
            nb_set_edge(ax, bx, I, J, k, vx)
        if vy != by[k]:
            nb_set_edge(ay, by, I, J, k, vy)
        d += (vx != vy) - before
        if vx > vy:
            viol += 1
        if d == 0 and tau < 0:
            tau = t
        if t % every == 0:
            s += 1
            out_d[s] = d
        if stop and d == 0:
            # equal states stay equal; the remaining counter is still consumed
            c += np.uint64(2 * (steps - t))
            for r in range(s + 1, out_d.shape[0]):
                out_d[r] = 0
            break
    return c, tau, viol


@numba.njit(cache=True, nogil=True)
def nb_er_pair(ax, bx, by, I, J, n, K, key, c, steps, every, p_star, psi_star, out_d, out_dev):
    """ERGM chain X coupled to the G(n, p*) refresh chain Y by a shared (I, U).

    Returns (counter, disagreements created).  ``out_dev`` holds
    |d_I H(X) - psi(p*)| per step when it has length ``steps``.
    """
    M = bx.shape[0]
    d = 0
    for k in range(M):
        d += bx[k] != by[k]
    out_d[0] = d
    rec = out_dev.shape[0] == steps
    created = 0
    s = 0
    for t in range(1, steps + 1):
        k = nb_index(nb_uniform(key, c), M)
        c += _ONE
        u = nb_uniform(key, c)
        c += _ONE
        h = nb_field(ax, n, I[k], J[k], K)
        if rec:
            out_dev[t - 1] = abs(h - psi_star)
        vx = 1 if u < nb_logistic(h) else 0
        vy = 1 if u < p_star else 0
        before = bx[k] != by[k]
        if vx != bx[k]:
            nb_set_edge(ax, bx, I, J, k, vx)
        by[k] = vy
        after = vx != vy
        if after:
            created += 1
        d += after - before
        if t % every == 0:
            s += 1
            out_d[s] = d
    return c, created


@numba.njit(cache=True, nogil=True)
def nb_sweep(adj, bits, I, J, n, K, key, c, coupled, p_star, ybits):
    """Resample every edge once in index order; one uniform per edge."""
    M = bits.shape[0]
    disc = 0
    for k in range(M):
        u = nb_uniform(key, c)
        c += _ONE
        v = 1 if u < nb_logistic(nb_field(adj, n, I[k], J[k], K)) else 0
        if v != bits[k]:
            nb_set_edge(adj, bits, I, J, k, v)
        if coupled:
            y = 1 if u < p_star else 0
            ybits[k] = y
            disc += v != y
    return c, disc


# ---------------------------------------------------------------- state & trace


@dataclass
class ChainState:
    model: ModelSpec
    config: Configuration
    t: int = 0

    def __post_init__(self):
        if self.config.n != self.model.n:
            raise ValueError(f"configuration has n={self.config.n}, model has n={self.model.n}")


@dataclass
class RunTrace:
    times: np.ndarray
    observables: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.int64)
        for name, col in self.observables.items():
            if len(col) != len(self.times):
                raise ValueError(f"observable {name!r} has {len(col)} entries for {len(self.times)} times")

    def column(self, name: str) -> np.ndarray:
        return self.observables[name]

    def to_csv_text(self) -> str:
        names = list(self.observables)
        cols = [self.times] + [self.observables[k] for k in names]
        rows = zip(*(c.tolist() for c in cols))
        return csv_text(["t", *names], rows)

    def write(self, path) -> tuple[Path, Path]:
        """CSV plus a ``.json`` metadata sidecar next to it."""
        path = Path(path)
        meta = dict(self.metadata)
        meta.setdefault("build", build_id())
        side = path.with_suffix(".json")
        atomic_write_text(path, self.to_csv_text())
        atomic_write_text(side, json_text(meta))
        return path, side


# ---------------------------------------------------------------- single steps


def _same_model(states: list[ChainState]) -> ModelSpec:
    if not states:
        raise ValueError("need at least one state")
    m = states[0].model
    for s in states[1:]:
        if s.model != m:
            raise ValueError("grand coupling needs every state on the same model")
    return m


def grand_coupled_step(states: list[ChainState], rng: RngStream) -> list[ChainState]:
    """Apply one shared (I, U) to every state; inputs are left untouched."""
    m = _same_model(states)
    K = m.kernel
    I, J = edge_arrays(m.n)
    M = I.shape[0]
    k = rng.index(M)
    u = rng.uniform()
    out = []
    for s in states:
        x = s.config.copy()
        v = 1 if u < nb_logistic(nb_field(x.adj, m.n, I[k], J[k], K)) else 0
        nb_set_edge(x.adj, x.bits, I, J, k, v)
        out.append(ChainState(m, x, s.t + 1))
    return out


def glauber_step(s: ChainState, rng: RngStream) -> ChainState:
    return grand_coupled_step([s], rng)[0]


# ---------------------------------------------------------------- runs


def default_burn_in(n: int) -> int:
    return int(math.ceil(20 * n * n * math.log(n)))


def default_cap(n: int) -> int:
    return int(math.ceil(200 * n * n * math.log(n)))


def advance_chain(m: ModelSpec, x: Configuration, steps: int, rng: RngStream) -> None:
    """Run ``steps`` Glauber steps in place, consuming ``rng``."""
    I, J = edge_arrays(m.n)
    ec = np.empty(2 if steps else 1, dtype=np.int64)
    c = nb_run(x.adj, x.bits, I, J, m.n, m.kernel, rng.nb_key, np.uint64(rng.counter),
               steps, max(steps, 1), ec, ec[:0], False)
    rng.advance(c)


def stationary_start(m: ModelSpec, rng: RngStream, burn_in: int | None = None) -> Configuration:
    """Full graph run for ``burn_in`` steps (default 20 n^2 log n)."""
    x = Configuration.full(m.n)
    advance_chain(m, x, default_burn_in(m.n) if burn_in is None else burn_in, rng)
    return x


_GNP = re.compile(r"^gnp\(\s*([0-9.eE+-]+)\s*\)$")


def make_init(m: ModelSpec, init, rng: RngStream, burn_in: int | None = None) -> Configuration:
    """Resolve ``init`` ("empty", "full", "gnp(p)", "stationary" or a Configuration)."""
    if isinstance(init, Configuration):
        if init.n != m.n:
            raise ValueError(f"initial configuration has n={init.n}, model has n={m.n}")
        return init.copy()
    if not isinstance(init, str):
        raise ValueError(f"unsupported init {init!r}")
    spec = init.strip().lower()
    if spec == "empty":
        return Configuration.empty(m.n)
    if spec == "full":
        return Configuration.full(m.n)
    if spec == "stationary":
        return stationary_start(m, rng, burn_in)
    g = _GNP.match(spec)
    if g:
        return Configuration.gnp(m.n, float(g.group(1)), rng)
    raise ValueError(f"bad init {init!r}; use empty, full, gnp(p), stationary or a Configuration")


def _check_every(steps: int, every: int) -> None:
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    if every < 1:
        raise ValueError("sample_every must be at least 1")


def _meta(m: ModelSpec, seed: int, **kw) -> dict:
    return {"model": m.to_text(), "seed": int(seed), **kw}


def run_chain(
    m: ModelSpec,
    init="full",
    steps: int = 0,
    sample_every: int = 1,
    seed: int = 42,
    stream_id: int = 0,
    track_state: bool = False,
    burn_in: int | None = None,
) -> RunTrace:
    """One chain; observables ``edge_count`` and, for M <= 62, ``state`` (bit code)."""
    _check_every(steps, sample_every)
    rng = RngStream(seed, stream_id)
    x = make_init(m, init, rng.child(0), burn_in)
    I, J = edge_arrays(m.n)
    track = bool(track_state)
    if track and x.M > 62:
        raise ValueError("state tracking needs M <= 62")
    ns = steps // sample_every + 1
    ec = np.empty(ns, dtype=np.int64)
    code = np.empty(ns if track else 0, dtype=np.int64)
    c = nb_run(x.adj, x.bits, I, J, m.n, m.kernel, rng.nb_key, np.uint64(0), steps, sample_every, ec, code, track)
    rng.advance(c)
    obs = {"edge_count": ec}
    if track:
        obs["state"] = code
    meta = _meta(m, seed, stream_id=stream_id, steps=steps, sample_every=sample_every,
                 init=init if isinstance(init, str) else init.to_hex(), final=x.to_hex())
    return RunTrace(np.arange(ns, dtype=np.int64) * sample_every, obs, meta)


def pm_sandwich_run(
    m: ModelSpec, steps: int, sample_every: int = 1, seed: int = 42, stream_id: int = 0, stop_at_coalescence: bool = True
) -> RunTrace:
    """Grand-coupled chains from the full and empty graphs; records d_H(Z+, Z-)."""
    if steps < 1:
        raise ValueError("steps must be at least 1")
    _check_every(steps, sample_every)
    rng = RngStream(seed, stream_id)
    top, bot = Configuration.full(m.n), Configuration.empty(m.n)
    I, J = edge_arrays(m.n)
    ns = steps // sample_every + 1
    d = np.empty(ns, dtype=np.int64)
    c, tau, viol = nb_pair(bot.adj, bot.bits, top.adj, top.bits, I, J, m.n, m.kernel, rng.nb_key,
                           np.uint64(0), steps, sample_every, d, stop_at_coalescence)
    rng.advance(c)
    meta = _meta(m, seed, stream_id=stream_id, steps=steps, sample_every=sample_every,
                 coalescence_time=None if tau < 0 else int(tau), order_violations=int(viol))
    return RunTrace(np.arange(ns, dtype=np.int64) * sample_every, {"hamming": d}, meta)


def map_replicas(fn, replicas: int, threads: int = 1) -> list:
    """``[fn(r) for r in range(replicas)]``, optionally on a thread pool (kernels release the GIL)."""
    if threads <= 1 or replicas <= 1:
        return [fn(r) for r in range(replicas)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, range(replicas)))


def coalescence_times(m: ModelSpec, replicas: int, seed: int = 42, cap: int | None = None, threads: int = 1) -> np.ndarray:
    """Coalescence step of each replica's (full, empty) pair; -1 if the cap was hit."""
    cap = default_cap(m.n) if cap is None else int(cap)

    def one(r):
        tr = pm_sandwich_run(m, cap, cap, seed, r)
        tau = tr.metadata["coalescence_time"]
        return -1 if tau is None else tau

    return np.array(map_replicas(one, replicas, threads), dtype=np.int64)


@dataclass
class TmixEstimate:
    steps: int
    capped: bool
    times: np.ndarray


def estimate_tmix(
    m: ModelSpec, epsilon: float = 0.25, replicas: int = 100, seed: int = 42, cap: int | None = None, threads: int = 1
) -> TmixEstimate:
    """Smallest t with the fraction of non-coalesced replicas at most ``epsilon``."""
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    if replicas < 1:
        raise ValueError("need at least one replica")
    cap = default_cap(m.n) if cap is None else int(cap)
    if epsilon == 1:
        return TmixEstimate(0, False, np.zeros(0, dtype=np.int64))
    taus = coalescence_times(m, replicas, seed, cap, threads)
    allowed = int(math.floor(epsilon * replicas + 1e-12))
    t = np.where(taus < 0, cap + 1, taus)
    t.sort()
    need = replicas - allowed  # this many must have coalesced
    if need <= 0:
        return TmixEstimate(0, False, taus)
    tk = int(t[need - 1])
    if tk > cap:
        return TmixEstimate(cap, True, taus)
    return TmixEstimate(tk, False, taus)


def ergm_er_coupled_run(
    m: ModelSpec,
    p_star: float,
    steps: int,
    seed: int = 42,
    x_init="stationary",
    y_init="gnp",
    sample_every: int = 1,
    stream_id: int = 0,
    record_field: bool = True,
    burn_in: int | None = None,
) -> RunTrace:
    """X follows the ERGM chain and Y refreshes edges as Bernoulli(p*), both off one (I, U).

    ``y_init="gnp"`` draws Y from G(n, p*) exactly.  Per-step field deviations
    |d_I H(X) - psi(p*)| land in ``metadata["field_deviation"]``.
    """
    if not 0 < p_star < 1:
        raise ValueError("p_star must lie in (0, 1)")
    _check_every(steps, sample_every)
    rng = RngStream(seed, stream_id)
    x = make_init(m, x_init, rng.child(0), burn_in)
    y = Configuration.gnp(m.n, p_star, rng.child(1)) if y_init == "gnp" else make_init(m, y_init, rng.child(1), burn_in)
    I, J = edge_arrays(m.n)
    ns = steps // sample_every + 1
    d = np.empty(ns, dtype=np.int64)
    dev = np.empty(steps if record_field else 0, dtype=np.float64)
    c, created = nb_er_pair(x.adj, x.bits, y.bits, I, J, m.n, m.kernel, rng.nb_key, np.uint64(0), steps,
                            sample_every, float(p_star), float(psi(m, p_star)), d, dev)
    rng.advance(c)
    meta = _meta(m, seed, stream_id=stream_id, steps=steps, sample_every=sample_every, p_star=float(p_star),
                 disagreements_created=int(created))
    if record_field:
        meta["field_deviation"] = dev
    return RunTrace(np.arange(ns, dtype=np.int64) * sample_every, {"hamming": d}, meta)


def sequential_sweep(m: ModelSpec, x: Configuration, seed: int = 42, stream_id: int = 0) -> Configuration:
    """One pass over edges 0..M-1, each resampled from its conditional law."""
    out, _, _ = _sweep(m, x, seed, stream_id, None)
    return out


def coupled_sequential_sweep(
    m: ModelSpec, x: Configuration, p_star: float, seed: int = 42, stream_id: int = 0
) -> tuple[Configuration, Configuration, int]:
    """Sweep coupled with a Bernoulli(p*) sweep; returns (X, Y, discrepancies created)."""
    if not 0 < p_star < 1:
        raise ValueError("p_star must lie in (0, 1)")
    return _sweep(m, x, seed, stream_id, p_star)


def _sweep(m, x, seed, stream_id, p_star):
    if x.n != m.n:
        raise ValueError(f"configuration has n={x.n}, model has n={m.n}")
    rng = RngStream(seed, stream_id)
    out = x.copy()
    I, J = edge_arrays(m.n)
    y = np.zeros(out.M, dtype=np.uint8)
    coupled = p_star is not None
    c, disc = nb_sweep(out.adj, out.bits, I, J, m.n, m.kernel, rng.nb_key, np.uint64(0), coupled,
                       float(p_star) if coupled else 0.0, y)
    rng.advance(c)
    return out, (Configuration(m.n, y) if coupled else None), int(disc)
