"""Command line front end."""

from __future__ import annotations

import argparse
import json
import sys
from typing import List, Optional

from .harness import (ALGORITHMS, ExperimentConfig, HarnessError,
                      MetricsReport, emit_csv, run_experiment)
from .topology import PowerParams, TopologyError
from .workload import WorkloadError

_CONFIG_KEYS = ("topology", "algo", "demands", "seeds", "betas", "delta_w",
                "out", "switch_power", "port_power", "pm_idle_power",
                "pm_max_power")


def _build_parsers():
    parser = argparse.ArgumentParser(
        prog="vnfplace",
        description="Power-aware placement of service function chains.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run placement experiments")
    run.add_argument("--config", metavar="FILE",
                     help="JSON file supplying defaults for the flags below")
    run.add_argument("--topology", default="nobel-germany",
                     help="topology file, or 'nobel-germany' for the bundled "
                          "instance (default)")
    run.add_argument("--algo", default="bi-lbi",
                     help="comma list of algorithms: %s" % ", ".join(ALGORITHMS))
    run.add_argument("--demands", default="100",
                     help="comma list of demand counts (default 100)")
    run.add_argument("--seeds", type=int, default=30,
                     help="repetitions per cell, seeds 0..n-1 (default 30)")
    run.add_argument("--betas", default="900,700,500,300",
                     help="descending bandwidth thresholds in Mb/s")
    run.add_argument("--delta-w", dest="delta_w", type=float, default=0.25,
                     help="path search reweighting step (default 0.25)")
    run.add_argument("--out", default=None,
                     help="CSV output path; a directory for lp-export")
    run.add_argument("--switch-power", dest="switch_power", type=float,
                     default=130.0, help="switch static wattage")
    run.add_argument("--port-power", dest="port_power", type=float,
                     default=1.0, help="wattage per busy port")
    run.add_argument("--pm-idle-power", dest="pm_idle_power", type=float,
                     default=150.0, help="PM idle wattage")
    run.add_argument("--pm-max-power", dest="pm_max_power", type=float,
                     default=250.0, help="PM full-load wattage")
    return parser, run


def _listify(value, cast) -> List:
    if isinstance(value, str):
        parts = [p.strip() for p in value.split(",") if p.strip()]
    elif isinstance(value, (list, tuple)):
        parts = list(value)
    else:
        parts = [value]
    return [cast(p) for p in parts]


def _print_report(report: MetricsReport) -> None:
    if report.lp_files:
        for path in report.lp_files:
            print("wrote %s" % path)
    if not report.rows:
        return
    print("%-10s %8s %6s %12s %12s %12s %10s %8s %10s"
          % ("algorithm", "demands", "seeds", "total[W]", "net[W]",
             "pm[W]", "delay[ms]", "acc[%]", "time[s]"))
    for row in report.rows:
        s = row.stats
        print("%-10s %8d %6d %12.1f %12.1f %12.1f %10.2f %8.1f %10.3f"
              % (row.algorithm, row.demand_count, row.seeds,
                 s["total_power_mean"], s["network_power_mean"],
                 s["pm_power_mean"], s["mean_delay_mean"],
                 s["acceptance_mean"], s["runtime_mean"]))


def main(argv: Optional[List[str]] = None) -> int:
    parser, run_parser = _build_parsers()
    args = parser.parse_args(argv)
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            print("bad config file: %s" % exc, file=sys.stderr)
            return 2
        unknown = sorted(set(data) - set(_CONFIG_KEYS))
        if unknown:
            print("unknown config keys: %s" % ", ".join(unknown),
                  file=sys.stderr)
            return 2
        run_parser.set_defaults(**data)
        args = parser.parse_args(argv)     # explicit flags still win
    try:
        config = ExperimentConfig(
            topology=args.topology,
            algorithms=_listify(args.algo, str),
            demand_counts=_listify(args.demands, int),
            seeds=int(args.seeds),
            betas_mbps=_listify(args.betas, float),
            weight_step=float(args.delta_w),
            power=PowerParams(float(args.switch_power), float(args.port_power),
                              float(args.pm_idle_power),
                              float(args.pm_max_power)),
            out=args.out)
    except (TypeError, ValueError) as exc:
        print("bad option value: %s" % exc, file=sys.stderr)
        return 2
    try:
        report = run_experiment(config)
    except (TopologyError, WorkloadError, ValueError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except HarnessError as exc:
        print("run failed: %s" % exc, file=sys.stderr)
        return 1
    _print_report(report)
    if config.out and report.rows:
        emit_csv(report, config.out)
        print("wrote %s" % config.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
