"""Experiment driver: run algorithms over seed batches, collect metrics.

Each (algorithm, demand count) cell is repeated over seeds 0..n-1 with
freshly generated demands and a fresh substrate, then aggregated to
mean and population standard deviation. Every run is gated on a full
state integrity check and on the reported power matching an independent
recomputation from the final state.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .exact import build_model, export_lp, solve_exact_small
from .placement import (PathSearchConfig, SolutionSet, bc_place_all,
                        place_all)
from .power import network_power, pm_power_total, total_power
from .topology import (NetworkGraph, PowerParams, default_catalogs,
                       nobel_germany, parse_topology)
from .workload import generate_demands

ALGORITHMS = ("bi-lbi", "bi-hbi", "bc", "exact-small", "lp-export")

CSV_HEADER = ("algorithm,demands,seeds,"
              "total_power_mean_w,total_power_std_w,"
              "network_power_mean_w,network_power_std_w,"
              "pm_power_mean_w,pm_power_std_w,"
              "mean_delay_mean_ms,mean_delay_std_ms,"
              "acceptance_mean_pct,acceptance_std_pct,"
              "runtime_mean_s,runtime_std_s")


class HarnessError(RuntimeError):
    """A run produced an inconsistent or unverifiable result."""


@dataclass
class ExperimentConfig:
    topology: str = "nobel-germany"
    algorithms: List[str] = field(default_factory=lambda: ["bi-lbi"])
    demand_counts: List[int] = field(default_factory=lambda: [100])
    seeds: int = 30
    betas_mbps: List[float] = field(
        default_factory=lambda: [900.0, 700.0, 500.0, 300.0])
    weight_step: float = 0.25
    power: PowerParams = field(default_factory=PowerParams)
    out: Optional[str] = None


@dataclass
class RunResult:
    algorithm: str
    demand_count: int
    seed: int
    total_power_w: float
    network_power_w: float
    pm_power_w: float
    mean_delay_ms: float
    acceptance: float
    runtime_s: float


@dataclass
class AggregateRow:
    algorithm: str
    demand_count: int
    seeds: int
    stats: Dict[str, float]        # <metric>_mean / <metric>_std


@dataclass
class MetricsReport:
    rows: List[AggregateRow]
    runs: List[RunResult]
    lp_files: List[str] = field(default_factory=list)


def load_topology(spec: str, power: Optional[PowerParams] = None) -> NetworkGraph:
    if spec == "nobel-germany":
        return nobel_germany(power)
    with open(spec, "r", encoding="utf-8") as fh:
        return parse_topology(fh.read(), power)


def _gate(solution: SolutionSet) -> None:
    bad = solution.state.validate()
    if bad:
        raise HarnessError("state violations: " + "; ".join(bad[:5]))
    recomputed = total_power(solution.state)
    if abs(recomputed - solution.total_power_w) > 1e-9:
        raise HarnessError("reported power %r, recomputed %r"
                           % (solution.total_power_w, recomputed))


def _run_once(graph: NetworkGraph, algorithm: str, demands,
              config: ExperimentConfig, count: int, seed: int) -> RunResult:
    if algorithm in ("bi-lbi", "bi-hbi"):
        cfg = PathSearchConfig(weight_step=config.weight_step)
        sol = place_all(graph, demands, config.betas_mbps,
                        mode=algorithm.split("-")[1], cfg=cfg)
        _gate(sol)
        return RunResult(algorithm, count, seed, sol.total_power_w,
                         sol.network_power_w, sol.pm_power_w,
                         sol.mean_delay_ms, sol.acceptance, sol.runtime_s)
    if algorithm == "bc":
        sol = bc_place_all(graph, demands)
        _gate(sol)
        return RunResult(algorithm, count, seed, sol.total_power_w,
                         sol.network_power_w, sol.pm_power_w,
                         sol.mean_delay_ms, sol.acceptance, sol.runtime_s)
    if algorithm == "exact-small":
        model = build_model(graph, demands)
        start = time.perf_counter()
        sol = solve_exact_small(model)
        runtime = time.perf_counter() - start
        if sol.status != "optimal":
            return RunResult(algorithm, count, seed, math.nan, math.nan,
                             math.nan, math.nan, 0.0, runtime)
        bad = sol.state.validate()
        if bad:
            raise HarnessError("exact state violations: " + "; ".join(bad[:5]))
        recomputed = total_power(sol.state)
        if abs(recomputed - sol.objective) > 1e-6:
            raise HarnessError("exact objective %r, recomputed %r"
                               % (sol.objective, recomputed))
        delays = [a.total_delay_ms for a in sol.allocations]
        mean_delay = sum(delays) / len(delays) if delays else math.nan
        return RunResult(algorithm, count, seed, recomputed,
                         network_power(sol.state), pm_power_total(sol.state),
                         mean_delay, 1.0, runtime)
    raise ValueError("unknown algorithm %r" % algorithm)


def _stats(values: List[float]) -> tuple:
    clean = [v for v in values if not math.isnan(v)]
    if not clean:
        return math.nan, math.nan
    arr = np.asarray(clean, dtype=float)
    return float(arr.mean()), float(arr.std())


def run_experiment(config: ExperimentConfig) -> MetricsReport:
    for algorithm in config.algorithms:
        if algorithm not in ALGORITHMS:
            raise ValueError("unknown algorithm %r, expected one of %s"
                             % (algorithm, ", ".join(ALGORITHMS)))
    if config.seeds < 1:
        raise ValueError("need at least one seed")
    if any(c < 0 for c in config.demand_counts):
        raise ValueError("negative demand count")
    graph = load_topology(config.topology, config.power)
    _, services = default_catalogs()
    report = MetricsReport([], [])
    for algorithm in config.algorithms:
        for count in config.demand_counts:
            if algorithm == "lp-export":
                outdir = config.out or "."
                os.makedirs(outdir, exist_ok=True)
                for seed in range(config.seeds):
                    demands = generate_demands(graph, count, services, seed)
                    model = build_model(graph, demands)
                    path = os.path.join(outdir,
                                        "model_c%d_s%d.lp" % (count, seed))
                    with open(path, "w", encoding="utf-8") as fh:
                        fh.write(export_lp(model))
                    report.lp_files.append(path)
                continue
            cell: List[RunResult] = []
            for seed in range(config.seeds):
                demands = generate_demands(graph, count, services, seed)
                cell.append(_run_once(graph, algorithm, demands, config,
                                      count, seed))
            report.runs.extend(cell)
            stats = {}
            for metric, values in (
                    ("total_power", [r.total_power_w for r in cell]),
                    ("network_power", [r.network_power_w for r in cell]),
                    ("pm_power", [r.pm_power_w for r in cell]),
                    ("mean_delay", [r.mean_delay_ms for r in cell]),
                    ("acceptance", [r.acceptance * 100.0 for r in cell]),
                    ("runtime", [r.runtime_s for r in cell])):
                mean, std = _stats(values)
                stats[metric + "_mean"] = mean
                stats[metric + "_std"] = std
            report.rows.append(AggregateRow(algorithm, count,
                                            config.seeds, stats))
    return report


def emit_csv(report: MetricsReport, path: str) -> None:
    """Fixed-format CSV; identical reports serialize to identical bytes."""
    lines = [CSV_HEADER]
    for row in report.rows:
        s = row.stats
        fields = [row.algorithm, str(row.demand_count), str(row.seeds)]
        for metric in ("total_power", "network_power", "pm_power",
                       "mean_delay", "acceptance", "runtime"):
            fields.append("%.6f" % s[metric + "_mean"])
            fields.append("%.6f" % s[metric + "_std"])
        lines.append(",".join(fields))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
