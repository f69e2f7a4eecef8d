"""``tfmm-lab`` command line entry point.

Exit codes: 0 success, 1 runtime or data error, 2 usage or config error.
Set ``TFMM_LAB_WORKERS`` to control sweep parallelism (default: CPU count).
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import config as cfgmod
from .bench import benchmark_records, write_benchmark_csv
from .classify import TradeClass
from .pool import PoolError
from .sim import ConfigError, SimTrace, run
from .trace import (
    TraceError,
    atomic_write,
    detect_trades,
    load_trace,
    mean_trade_spacing,
    window_report,
    write_report,
    write_trace,
)

log = logging.getLogger("tfmm_lab")

WORKERS_ENV = "TFMM_LAB_WORKERS"


class UsageError(Exception):
    pass


def _dump_json(path: Path, obj) -> None:
    atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def sim_summary(trace: SimTrace) -> dict:
    trades = trace.trades
    n = len(trace.blocks)
    last = trace.blocks[-1]
    counts = {c.value: 0 for c in TradeClass}
    for t in trades:
        counts[t.label.value] += 1
    profit = float(sum(t.profit_usd for t in trades))
    spacing = mean_trade_spacing(n, len(trades))
    return {
        "n_blocks": n,
        "n_trades": len(trades),
        "n_standalone": len(trace.strikes),
        "n_incidental_router": len(trades) - len(trace.strikes),
        "label_counts": counts,
        "total_profit_usd": profit,
        "mean_profit_per_trade_usd": profit / len(trades) if trades else 0.0,
        "total_skim_usd": last.cum_skim_usd,
        "total_theoretical_usd": last.cum_theoretical_usd,
        "efficiency_ratio": profit / last.cum_theoretical_usd if last.cum_theoretical_usd > 0 else 0.0,
        "mean_blocks_between_trades": None if np.isinf(spacing) else spacing,
        "max_allocation_drift": float(trace.column("allocation_drift").max()),
        "initial_pool_value_usd": trace.initial_value_usd,
        "final_pool_value_usd": last.pool_value_usd,
        "seed": trace.config.seed,
    }


def _simulate_to(cfg: dict, seed: int | None, out: Path, fmt: str) -> dict:
    sc = cfgmod.build_sim_config(cfg, seed)
    trace = run(sc)
    out.mkdir(parents=True, exist_ok=True)
    write_trace(trace.records(), out / f"trace.{fmt}", fmt)
    summary = sim_summary(trace)
    _dump_json(out / "summary.json", summary)
    return summary


def cmd_simulate(args, cfg: dict) -> int:
    summary = _simulate_to(cfg, args.seed, Path(args.out), args.format)
    log.info("simulated %d blocks, %d trades", summary["n_blocks"], summary["n_trades"])
    return 0


def _trace_path(args, cfg: dict) -> Path:
    path = args.trace or cfg.get("trace")
    if not path:
        raise UsageError("no trace given: pass --trace or set 'trace' in the config")
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"trace file not found: {p}")
    return p


def cmd_analyze(args, cfg: dict) -> int:
    records = load_trace(_trace_path(args, cfg))
    acfg = cfgmod.build_analysis(cfg)
    trades = detect_trades(records, acfg)
    report = window_report(records, trades, acfg)
    if not records:
        log.warning("trace is empty; writing a zero report")
    for flag in report.flags:
        log.warning("%s", flag)
    write_report(args.out, records, trades, report, acfg)
    return 0


def cmd_benchmark(args, cfg: dict) -> int:
    records = load_trace(_trace_path(args, cfg))
    if not records:
        raise TraceError("cannot benchmark an empty trace")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = cfgmod.build_benchmark_params(cfg)
    index = []
    for k, p in enumerate(params):
        name = "benchmark.csv" if len(params) == 1 else f"benchmark_{k:03d}.csv"
        write_benchmark_csv(benchmark_records(records, p), out / name)
        index.append(
            {
                "file": name,
                "commission_rate": p.commission_rate,
                "half_spread_rate": p.half_spread_rate,
                "rebalance_cadence_blocks": p.rebalance_cadence_blocks,
            }
        )
    _dump_json(out / "benchmark_index.json", index)
    return 0


SWEEP_METRICS = (
    "n_trades",
    "total_profit_usd",
    "mean_profit_per_trade_usd",
    "total_skim_usd",
    "total_theoretical_usd",
    "efficiency_ratio",
    "max_allocation_drift",
    "final_pool_value_usd",
)


def _sweep_point(job: tuple[dict, int | None, str, str]) -> dict:
    cfg, seed, out, fmt = job
    return _simulate_to(cfg, seed, Path(out), fmt)


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}")
    return n


def cmd_sweep(args, cfg: dict) -> int:
    sweep = cfg.get("sweep")
    if not sweep or "parameter" not in sweep or not sweep.get("values"):
        raise ConfigError("sweep needs a 'sweep' section with 'parameter' and non-empty 'values'")
    param, values = sweep["parameter"], list(sweep["values"])
    base = {k: v for k, v in cfg.items() if k != "sweep"}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = []
    for k, v in enumerate(values):
        point_cfg = cfgmod.set_path(base, param, v)
        cfgmod.build_sim_config(point_cfg, args.seed)  # fail fast before spawning workers
        jobs.append((point_cfg, args.seed, str(out / f"point_{k:03d}"), args.format))
    workers = min(_workers(), len(jobs))
    if workers == 1:
        results = [_sweep_point(j) for j in jobs]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_point, jobs))
    lines = ["point,parameter,value,metric,metric_value"]
    for k, (v, summary) in enumerate(zip(values, results)):
        for m in SWEEP_METRICS:
            lines.append(f"{k},{param},{v!r},{m},{summary[m]!r}")
    atomic_write(out / "sweep.csv", "\n".join(lines) + "\n")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "benchmark": cmd_benchmark,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tfmm-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        needs_config = name in ("simulate", "sweep")
        p.add_argument("--config", required=needs_config, help="YAML run config")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        if name in ("analyze", "benchmark"):
            p.add_argument("--trace", help="trace file (overrides the config's 'trace')")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="tfmm-lab: %(levelname)s: %(message)s",
    )
    try:
        cfg = cfgmod.load_config(args.config) if args.config else {}
        return COMMANDS[args.command](args, cfg)
    except FileNotFoundError as exc:
        print(f"tfmm-lab: error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, UsageError) as exc:
        print(f"tfmm-lab: config error: {exc}", file=sys.stderr)
        return 2
    except (TraceError, PoolError, ValueError, OSError) as exc:
        print(f"tfmm-lab: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
