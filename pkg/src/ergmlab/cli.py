"""Command-line entry point: ``ergmlab <subcommand> --model '...' [options]``.

Exit codes: 0 success, 1 an experiment assertion failed, 2 usage error or an
unwritable output directory.  Option precedence is flag > config file > default.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dynamics as dyn
from . import experiments as ex
from . import oracle as orc
from .artifacts import atomic_write_text, build_id, csv_text, json_text
from .config import n_edges
from .hamiltonian import ModelSpec
from .phase import DEFAULT_GRID, EPS_CRIT, SUBCRITICAL, classify

DEFAULTS = {
    "seed": 42,
    "out": None,
    "replicas": 1,
    "threads": os.cpu_count() or 1,
    "format": "csv",
    "steps": None,
    "sample_every": None,
    "init": "full",
    "epsilon": 0.25,
    "samples": None,
    "n_grid": None,
    "m_edges": None,
    "burn_in": None,
    "grid": DEFAULT_GRID,
    "eps_crit": EPS_CRIT,
    "steps_multiplier": 20,
    "sweeps": 50,
}
INT_KEYS = {"seed", "replicas", "threads", "steps", "sample_every", "samples", "m_edges", "burn_in", "grid",
            "steps_multiplier", "sweeps"}
FLOAT_KEYS = {"epsilon", "eps_crit"}


class UsageError(Exception):
    pass


@dataclass
class Outcome:
    name: str
    csv: str
    summary: dict
    files: dict[str, str] = field(default_factory=dict)
    streams: list[int] = field(default_factory=lambda: [0])
    stdout_json: bool = False

    @property
    def assertions(self) -> dict:
        return self.summary.get("assertions", {})


def read_config(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise UsageError(f"cannot read config file {path}: {e}") from e
    for k, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{k}: expected key=value")
        out[key.strip().replace("-", "_")] = val.strip()
    return out


def _coerce(key, val):
    if val is None:
        return None
    try:
        if key in INT_KEYS:
            return int(val)
        if key in FLOAT_KEYS:
            return float(val)
    except ValueError as e:
        raise UsageError(f"bad value for {key}: {val!r}") from e
    return val


def resolve(args: argparse.Namespace) -> dict:
    cfg = read_config(args.config) if args.config else {}
    out = {}
    for key in set(DEFAULTS) | {"model"}:
        flag = getattr(args, key, None)
        val = flag if flag is not None else cfg.get(key, DEFAULTS.get(key))
        out[key] = _coerce(key, val)
    if not out["model"]:
        raise UsageError("--model is required (flag or config file)")
    if out["format"] not in ("csv", "json"):
        raise UsageError("--format must be csv or json")
    return out


def parse_grid(text: str | None, default: list[int]) -> list[int]:
    if text is None:
        return default
    try:
        return [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError as e:
        raise UsageError(f"bad --n-grid {text!r}") from e


# ---------------------------------------------------------------- subcommands


def cmd_phase(m: ModelSpec, c: dict) -> Outcome:
    rep = classify(m, c["grid"], c["eps_crit"])
    rows = [[p, d] for p, d in rep.roots]
    summary = {"report": rep.to_dict(), "assertions": {}}
    return Outcome("phase", csv_text(["root", "phi_prime"], rows), summary, stdout_json=True)


def _warning(m: ModelSpec) -> dict:
    rep = classify(m)
    w = None if rep.classification == SUBCRITICAL else f"model classified {rep.classification}"
    return {"phase": rep.to_dict(), "warning": w}


def cmd_sample(m: ModelSpec, c: dict) -> Outcome:
    M = n_edges(m.n)
    steps = c["steps"] if c["steps"] is not None else 10 * M
    every = c["sample_every"] or max(1, M // 4)
    R = c["replicas"]
    traces = dyn.map_replicas(
        lambda r: dyn.run_chain(m, c["init"], steps, every, c["seed"], stream_id=r, burn_in=c["burn_in"]), R, c["threads"]
    )
    rows = [[r, t, e] for r, tr in enumerate(traces) for t, e in zip(tr.times.tolist(), tr.column("edge_count").tolist())]
    summary = {"assertions": {}, "finals": [tr.metadata["final"] for tr in traces], **_warning(m),
               "steps": steps, "sample_every": every}
    return Outcome("sample", csv_text(["replica", "t", "edge_count"], rows), summary, streams=list(range(R)))


def cmd_couple(m: ModelSpec, c: dict) -> Outcome:
    steps = c["steps"] if c["steps"] is not None else dyn.default_cap(m.n)
    every = c["sample_every"] or max(1, m.n * m.n // 4)
    R = c["replicas"]
    traces = dyn.map_replicas(lambda r: dyn.pm_sandwich_run(m, steps, every, c["seed"], r), R, c["threads"])
    rows = [[r, t, d] for r, tr in enumerate(traces) for t, d in zip(tr.times.tolist(), tr.column("hamming").tolist())]
    taus = [tr.metadata["coalescence_time"] for tr in traces]
    viol = sum(tr.metadata["order_violations"] for tr in traces)
    summary = {"assertions": {"order_preserved": viol == 0}, "coalescence_times": taus, "steps": steps, **_warning(m)}
    return Outcome("couple", csv_text(["replica", "t", "hamming"], rows), summary, streams=list(range(R)))


def cmd_mix(m: ModelSpec, c: dict) -> Outcome:
    R = c["replicas"] if c["replicas"] > 1 else 100
    est = dyn.estimate_tmix(m, c["epsilon"], R, c["seed"], c["steps"], c["threads"])
    rows = [[r, int(t)] for r, t in enumerate(est.times)]
    summary = {"assertions": {}, "tmix": est.steps, "capped": est.capped, "epsilon": c["epsilon"], **_warning(m)}
    return Outcome("mix", csv_text(["replica", "coalescence_time"], rows), summary, streams=list(range(R)))


def cmd_oracle_check(m: ModelSpec, c: dict) -> Outcome:
    g = orc.enumerate_gibbs(m)
    files = {"oracle_table.csv": g.dump_csv()}
    stats = {"log_Z": g.log_Z, "free_energy": g.free_energy}
    asserts = {}
    if m.n <= orc.MAX_KERNEL_N:
        db = orc.detailed_balance_check(g)
        stats["detailed_balance"] = db
        asserts["detailed_balance_below_1e-12"] = db < 1e-12
        if m.n <= 5:
            rep = orc.exact_spectral_gap(g)
            files["spectral.json"] = rep.to_json()
            stats["spectral_gap"] = rep.gap
    steps = c["steps"] if c["steps"] is not None else 1_000_000
    burn = c["burn_in"] if c["burn_in"] is not None else 100_000
    if n_edges(m.n) <= 62 and m.n <= 5:
        h = orc.histogram_check(m, steps, burn, c["seed"])
        stats["histogram"] = h
        asserts["chi_square_99"] = h["chi2_pass"]
        asserts["tv_below_0.02"] = h["tv_pass"]
    rows = [[k, v] for k, v in sorted(stats.items()) if not isinstance(v, dict)]
    summary = {"assertions": asserts, "statistics": stats}
    return Outcome("oracle_check", csv_text(["quantity", "value"], rows), summary, files)


def _grid_kw(c):
    kw = {"seed": c["seed"], "threads": c["threads"]}
    if c["burn_in"] is not None:
        kw["burn_in"] = c["burn_in"]
    return kw


def _exp(r: ex.ExperimentResult, streams=None) -> Outcome:
    return Outcome(r.name, r.csv(), r.summary, streams=streams or [0])


def cmd_concentration(m, c):
    grid = parse_grid(c["n_grid"], [24, 48, 96])
    return _exp(ex.concentration_grid(m, grid, c["samples"] or 2000, **_grid_kw(c)))


def cmd_clt(m, c):
    kw = _grid_kw(c)
    bank = ex.draw_bank(m, c["samples"] or 2000, seed=kw["seed"], threads=kw["threads"], burn_in=kw.get("burn_in"))
    return _exp(ex.clt_sample(bank, c["m_edges"]), bank.streams)


def cmd_correlations(m, c):
    grid = parse_grid(c["n_grid"], [16, 32, 64])
    return _exp(ex.correlation_grid(m, grid, c["samples"] or 10_000, **_grid_kw(c)))


def cmd_conditional(m, c):
    grid = parse_grid(c["n_grid"], [16, 32, 64])
    return _exp(ex.conditional_grid(m, grid, c["samples"] or 10_000, **_grid_kw(c)))


def cmd_marginal(m, c):
    grid = parse_grid(c["n_grid"], [16, 32, 64])
    return _exp(ex.marginal_vs_pstar(m, grid, c["samples"] or 2000, **_grid_kw(c)))


def cmd_w1(m, c):
    grid = parse_grid(c["n_grid"], [16, 32, 64])
    return _exp(ex.w1_scaling(m, grid, c["steps_multiplier"], c["seed"], c["sweeps"], c["burn_in"]))


def cmd_mple(m, c):
    return _exp(ex.mple_experiment(m, c["seed"], c["burn_in"]))


COMMANDS = {
    "phase": (cmd_phase, "classify the mean-field fixed points"),
    "sample": (cmd_sample, "run Glauber chains and record edge counts"),
    "couple": (cmd_couple, "grand-coupled chains from the full and empty graphs"),
    "mix": (cmd_mix, "coalescence-based mixing time estimate"),
    "oracle-check": (cmd_oracle_check, "exact enumeration, detailed balance and histogram checks"),
    "concentration": (cmd_concentration, "variance and tail of the edge count across n"),
    "clt": (cmd_clt, "normality of sums over vertex-disjoint edges"),
    "correlations": (cmd_correlations, "pair and three-point covariance decay"),
    "conditional": (cmd_conditional, "shift of an edge marginal under conditioning"),
    "marginal": (cmd_marginal, "edge density against p* across n"),
    "w1": (cmd_w1, "ERGM versus G(n,p*) coupling distance"),
    "mple": (cmd_mple, "maximum pseudo-likelihood fit"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", help="model text, e.g. 'n=16; term=triangle:0.2'")
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--seed", type=int, help="master seed (default 42)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--replicas", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--format", choices=["csv", "json"])
    common.add_argument("--steps", type=int)
    common.add_argument("--sample-every", dest="sample_every", type=int)
    common.add_argument("--burn-in", dest="burn_in", type=int)
    common.add_argument("--init", help="empty, full, gnp(p) or stationary")
    common.add_argument("--epsilon", type=float)
    common.add_argument("--samples", type=int)
    common.add_argument("--n-grid", dest="n_grid", help="comma-separated vertex counts")
    common.add_argument("--m-edges", dest="m_edges", type=int)
    common.add_argument("--grid", type=int, help="phase scan resolution")
    common.add_argument("--eps-crit", dest="eps_crit", type=float)
    common.add_argument("--steps-multiplier", dest="steps_multiplier", type=int)
    common.add_argument("--sweeps", type=int)
    p = argparse.ArgumentParser(prog="ergmlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_, description=help_)
    return p


def _prepare_out(path) -> Path | None:
    if path is None:
        return None
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise UsageError(f"cannot create output directory {out}: {e}") from e
    if not os.access(out, os.W_OK):
        raise UsageError(f"output directory {out} is not writable")
    return out


def _write(out: Path, outcome: Outcome, c: dict, wall: float) -> None:
    atomic_write_text(out / f"{outcome.name}.csv", outcome.csv)
    atomic_write_text(out / f"{outcome.name}.json", json_text(outcome.summary))
    for fname, text in outcome.files.items():
        atomic_write_text(out / fname, text)
    manifest = {
        "command": outcome.name,
        "model": c["model_text"],
        "config": {k: v for k, v in c.items() if k != "model_text"},
        "master_seed": c["seed"],
        "seeds": [{"master_seed": c["seed"], "stream_id": s} for s in outcome.streams],
        "build": build_id(),
        "wall_clock_seconds": wall,
        "assertions": outcome.assertions,
        "warning": outcome.summary.get("warning"),
    }
    atomic_write_text(out / "manifest.json", json_text(manifest))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 2
    try:
        c = resolve(args)
        try:
            m = ModelSpec.parse(c["model"])
        except ValueError as e:
            raise UsageError(f"bad --model: {e}") from e
        c["model_text"] = m.to_text()
        out = _prepare_out(c["out"])
        fn = COMMANDS[args.command][0]
        t0 = time.perf_counter()
        try:
            outcome = fn(m, c)
        except (ValueError, ex.InsufficientData) as e:
            raise UsageError(str(e)) from e
        wall = time.perf_counter() - t0
        if out is not None:
            try:
                _write(out, outcome, c, wall)
            except OSError as e:
                raise UsageError(f"cannot write to {out}: {e}") from e
    except UsageError as e:
        print(f"ergmlab {args.command}: error: {e}", file=sys.stderr)
        return 2
    if outcome.stdout_json or c["format"] == "json":
        sys.stdout.write(json_text(outcome.summary.get("report", outcome.summary)))
    else:
        sys.stdout.write(outcome.csv)
    failed = [k for k, v in outcome.assertions.items() if not bool(v)]
    if failed:
        print(f"assertions failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
