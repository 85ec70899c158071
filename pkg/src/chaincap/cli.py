"""Command-line experiment harness.

Experiments are JSON documents: a `kind`, fixed `params`, and an optional
`grid` mapping parameter names to value lists. The grid is expanded in
declaration order into one CSV row per point; rows carry the swept
parameters followed by a fixed set of metric columns, with metrics a kind
does not produce left empty. Rows are written in grid order even when
points are evaluated in parallel (CHAINCAP_THREADS caps the pool, 0 or
unset picks the CPU count), and a failed point fills only the `error`
column and flips the exit code to 1.

Subcommands: `edtmc` (truncated-chain capacity), `closed-form` (two-miner
exact capacity), `strong` (consistency metrics), `simulate` (Monte
Carlo; also accepts a flat simulator config document), `compare`
(closed form vs delay/fork baselines vs simulation) and `sweep` (any kind,
grid required).
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import consistency as cons
from . import relchain
from . import simulator as sim
from . import twominer
from .netmodel import (NetworkScenario, aggregate_lan, complete_graph,
                       line_graph, stale_ratio, star_graph)

__all__ = ["ExperimentSpec", "mining_profile", "run_experiment", "main"]

KINDS = ("edtmc-capacity", "closed-form", "strong-consistency",
         "simulate", "compare-baselines")

METRIC_COLUMNS = ("R_edtmc", "R_closed", "R_sim", "R_sim_stderr", "R2_prime",
                  "R2_star", "dR2_dc1", "O_r", "eta", "gamma1", "gamma2",
                  "consistency_sim", "k_used", "seed", "error")

_PROBABILITY_AXES = {"alpha", "a12", "a21", "c", "c1", "c2"}


def mining_profile(n: int, q: float, total: float = 0.5) -> np.ndarray:
    """Geometric mining-rate vector c_i = c_1 * q^(i-1) with sum `total`.

    q tunes how centralized mining is: q = 1 gives uniform rates total/n,
    small q concentrates almost the whole budget on the first miner.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 < q <= 1.0:
        raise ValueError("q must lie in (0, 1]")
    if total <= 0.0:
        raise ValueError("total mining rate must be positive")
    if q == 1.0:
        return np.full(n, total / n)
    head = total * (1.0 - q) / (1.0 - q**n)
    return head * q ** np.arange(n)


@dataclass
class ExperimentSpec:
    """Parsed experiment document."""

    kind: str
    params: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    out: str | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        for axis, values in self.grid.items():
            if not isinstance(values, (list, tuple)) or len(values) == 0:
                raise ValueError(f"grid axis {axis!r} must be a non-empty list")
            if axis in _PROBABILITY_AXES:
                bad = [v for v in values if not 0.0 <= float(v) <= 1.0]
                if bad:
                    raise ValueError(f"grid axis {axis!r} has values outside [0, 1]: {bad}")
            if axis == "q":
                bad = [v for v in values if not 0.0 < float(v) <= 1.0]
                if bad:
                    raise ValueError(f"grid axis 'q' has values outside (0, 1]: {bad}")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentSpec":
        if "kind" not in doc and "miners" in doc:
            # flat simulator document: scenario fields plus slots/seed/rule
            sim_cfg = sim.SimConfig.from_dict(doc)
            return cls(kind="simulate",
                       params={"scenario": sim_cfg.scenario.to_dict(),
                               "slots": sim_cfg.slots, "seed": sim_cfg.seed,
                               "rule": sim_cfg.rule,
                               "track_consistency": sim_cfg.track_consistency,
                               "track_attribution": sim_cfg.track_attribution,
                               "replications": sim_cfg.replications},
                       out=doc.get("out"))
        return cls(kind=doc.get("kind", ""),
                   params=dict(doc.get("params", {})),
                   grid=dict(doc.get("grid", {})),
                   out=doc.get("out"),
                   seed=doc.get("seed"))

    @classmethod
    def from_file(cls, path: str) -> "ExperimentSpec":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def points(self) -> list[dict]:
        """Grid points in declaration order (one empty point if no grid)."""
        if not self.grid:
            return [dict(self.params)]
        axes = list(self.grid.keys())
        out = []
        for combo in itertools.product(*(self.grid[ax] for ax in axes)):
            p = dict(self.params)
            p.update(zip(axes, combo))
            out.append(p)
        return out


# ---------------------------------------------------------------------------
# Point evaluation
# ---------------------------------------------------------------------------

def _scenario_from(p: dict) -> NetworkScenario:
    if "scenario" in p:
        return NetworkScenario.from_dict(p["scenario"])
    n = int(p["n"])
    if "q" in p:
        c = mining_profile(n, float(p["q"]), float(p.get("total", 0.5)))
    else:
        c = p["c"]
        c = np.full(n, float(c)) if np.isscalar(c) else np.asarray(c, dtype=float)
    if n == 2 and ("a12" in p or "a21" in p):
        links = np.array([[0.0, float(p["a12"])], [float(p["a21"]), 0.0]])
    else:
        builders = {"complete": complete_graph, "star": star_graph, "line": line_graph}
        topology = p.get("topology", "complete")
        if topology not in builders:
            raise ValueError(f"unknown topology {topology!r}")
        links = builders[topology](n, float(p["alpha"]))
    return NetworkScenario(c, links, int(p.get("zeta", 1)))


def _miner_rate(p: dict, which: int) -> float | None:
    lan = p.get(f"lan{which}")
    if lan is not None:
        return aggregate_lan(float(lan["rate"]), int(lan["count"]))
    value = p.get(f"c{which}")
    return None if value is None else float(value)


def _two_rates(p: dict) -> tuple[float, float]:
    c1 = _miner_rate(p, 1)
    c2 = _miner_rate(p, 2)
    if c2 is None and "c_total" in p:
        # sweep c1 under a fixed total mining rate
        c2 = float(p["c_total"]) - c1
    if c1 is None or c2 is None:
        raise ValueError("two-miner experiments need c1 and c2 (or lan1/lan2/c_total)")
    return c1, c2


def _two_params(p: dict) -> twominer.TwoMinerParams:
    c1, c2 = _two_rates(p)
    a12 = float(p.get("a12", p.get("alpha")))
    a21 = float(p.get("a21", p.get("alpha")))
    return twominer.TwoMinerParams(c1, c2, a12, a21)


def _sim_config(p: dict, scenario: NetworkScenario, default_seed: int,
                rule: str | None = None) -> tuple[sim.SimConfig, int]:
    cfg = sim.SimConfig(
        scenario=scenario,
        slots=int(p.get("slots", 100_000)),
        seed=int(p.get("seed", default_seed)),
        rule=rule or p.get("rule", sim.RULE_LONGEST),
        track_consistency=bool(p.get("track_consistency", True)),
        track_attribution=bool(p.get("track_attribution", True)),
        replications=int(p.get("replications", 1)),
    )
    return cfg, cfg.replications


def _evaluate_point(kind: str, p: dict, default_seed: int) -> dict:
    if kind == "closed-form":
        params = _two_params(p)
        sol = twominer.solve(params)
        row = {"R_closed": sol.R2}
        if params.c1 + params.c2 > 0:
            row["O_r"] = stale_ratio([params.c1, params.c2], sol.R2)
        if "derivative_h" in p:
            row["dR2_dc1"] = twominer.capacity_derivative(
                params, float(p["derivative_h"]),
                couple_c2=bool(p.get("couple_c2", True)))
        return row

    if kind == "edtmc-capacity":
        scenario = _scenario_from(p)
        cap = int(p.get("state_cap", relchain.DEFAULT_STATE_CAP))
        if "k" in p:
            k = int(p["k"])
            result = relchain.evaluate(scenario, k, state_cap=cap)
        else:
            k, result = relchain.converge_k(
                scenario, float(p.get("tolerance", 1e-6)), state_cap=cap)
        return {"R_edtmc": result.growth_rate, "O_r": result.stale_ratio,
                "k_used": k}

    if kind == "strong-consistency":
        c1, c2 = _two_rates(p)
        a12 = float(p.get("a12", p.get("alpha", 1.0)))
        a21 = float(p.get("a21", p.get("alpha", 1.0)))
        if a12 == 1.0 and a21 == 1.0:
            g1, g2 = cons.gamma(c1, c2)
            return {"eta": cons.eta(c1, c2), "gamma1": g1, "gamma2": g2}
        report = cons.fdtmc_numeric(
            twominer.TwoMinerParams(c1, c2, a12, a21),
            int(p.get("bound", 40)))
        return {"eta": report.eta, "gamma1": report.gamma1,
                "gamma2": report.gamma2}

    if kind == "simulate":
        scenario = _scenario_from(p)
        cfg, reps = _sim_config(p, scenario, default_seed)
        report = sim.run_replications(cfg, reps)
        row = {"R_sim": report.capacity_estimate,
               "R_sim_stderr": report.capacity_stderr,
               "O_r": report.stale_ratio,
               "seed": report.seed}
        if report.consistency_fraction is not None:
            row["consistency_sim"] = report.consistency_fraction
        if report.gamma_empirical is not None and scenario.n == 2:
            row["gamma1"], row["gamma2"] = report.gamma_empirical
        return row

    if kind == "compare-baselines":
        params = _two_params(p)
        alpha = float(p.get("alpha", params.a12))
        row = {"R_closed": twominer.solve(params).R2,
               "R2_star": twominer.baseline_fork_probability(
                   params.c1, params.c2, alpha)}
        if params.c1 != params.c2:
            row["R2_prime"] = twominer.baseline_constant_delay(
                params.c1, params.c2, alpha)
        links = np.array([[0.0, params.a12], [params.a21, 0.0]])
        scenario = NetworkScenario(np.array([params.c1, params.c2]), links)
        cfg, reps = _sim_config(p, scenario, default_seed, rule=sim.RULE_LONGEST)
        report = sim.run_replications(cfg, reps)
        row.update({"R_sim": report.capacity_estimate,
                    "R_sim_stderr": report.capacity_stderr,
                    "seed": report.seed})
        return row

    raise ValueError(f"unknown experiment kind {kind!r}")


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------

def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))  # plain shortest round-trip form
    return str(value)


def _thread_count() -> int:
    raw = os.environ.get("CHAINCAP_THREADS", "0")
    try:
        count = int(raw)
    except ValueError:
        count = 0
    return count if count > 0 else (os.cpu_count() or 1)


def run_experiment(spec: ExperimentSpec, stream, quiet: bool = True) -> int:
    """Evaluate all grid points and write the CSV to `stream`.

    Returns the number of failed points. Rows appear in grid order; a
    failed point keeps its parameter cells and carries the message in the
    `error` column.
    """
    points = spec.points()
    default_seed = int(spec.seed) if spec.seed is not None else 0
    axes = list(spec.grid.keys())

    def job(p):
        try:
            return _evaluate_point(spec.kind, p, default_seed)
        except Exception as exc:  # reported per row
            return {"error": f"{type(exc).__name__}: {exc}"}

    threads = min(_thread_count(), len(points))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, points))
    else:
        results = [job(p) for p in points]

    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(list(axes) + list(METRIC_COLUMNS))
    failures = 0
    for i, (point, metrics) in enumerate(zip(points, results)):
        if "error" in metrics:
            failures += 1
        row = [_format_cell(point.get(ax)) for ax in axes]
        row += [_format_cell(metrics.get(col)) for col in METRIC_COLUMNS]
        writer.writerow(row)
        if not quiet:
            status = metrics.get("error", "ok")
            print(f"[{i + 1}/{len(points)}] {spec.kind} {status}", file=sys.stderr)
    return failures


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

_SUBCOMMAND_KINDS = {
    "edtmc": "edtmc-capacity",
    "closed-form": "closed-form",
    "strong": "strong-consistency",
    "simulate": "simulate",
    "compare": "compare-baselines",
    "sweep": None,  # kind read from the config document
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chaincap",
        description="capacity and consistency analysis of slotted "
                    "proof-of-work blockchains")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _SUBCOMMAND_KINDS:
        p = sub.add_parser(name, help=f"run a {name} experiment config")
        p.add_argument("--config", required=True, help="experiment JSON document")
        p.add_argument("--out", default=None, help="CSV output path (default: stdout)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config's base seed")
        p.add_argument("--quiet", action="store_true",
                       help="suppress per-point progress on stderr")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        spec = ExperimentSpec.from_file(args.config)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: invalid config {args.config!r}: {exc}", file=sys.stderr)
        return 2
    expected = _SUBCOMMAND_KINDS[args.command]
    if expected is not None and spec.kind != expected:
        print(f"error: config kind {spec.kind!r} does not match "
              f"subcommand {args.command!r}", file=sys.stderr)
        return 2
    if args.command == "sweep" and not spec.grid:
        print("error: sweep requires a non-empty grid", file=sys.stderr)
        return 2
    if args.seed is not None:
        spec.seed = args.seed
    out_path = args.out or spec.out

    buffer = io.StringIO()
    failures = run_experiment(spec, buffer, quiet=args.quiet)
    payload = buffer.getvalue()
    if out_path:
        with open(out_path, "w", newline="", encoding="utf-8") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload)
    if failures and not args.quiet:
        print(f"{failures} point(s) failed", file=sys.stderr)
    return 1 if failures else 0


if __name__ == "__main__":
    raise SystemExit(main())
