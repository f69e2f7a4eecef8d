"""Counterfactual CEX rebalancers following the pool's own weight trajectory.

LVR rebalances frictionlessly every block. RVR pays commission plus half
spread on the turnover of each rebalance. Turnover is ``sum |w - theta|``,
counting each unit of imbalance once, so double the rates for a two-sided
convention.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "BenchmarkParams",
    "BenchmarkSeries",
    "lvr_series",
    "rvr_series",
    "relative_performance",
    "benchmark",
    "benchmark_records",
    "write_benchmark_csv",
]

MAX_RATE = 0.1


@dataclass(frozen=True)
class BenchmarkParams:
    """Defaults are conventional CEX costs, not calibrated values."""

    commission_rate: float = 0.0010
    half_spread_rate: float = 0.0005
    rebalance_cadence_blocks: int = 1

    def __post_init__(self) -> None:
        for name in ("commission_rate", "half_spread_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= MAX_RATE:
                raise ValueError(f"{name} must lie in [0, {MAX_RATE}], got {v}")
        if int(self.rebalance_cadence_blocks) != self.rebalance_cadence_blocks or self.rebalance_cadence_blocks < 1:
            raise ValueError("rebalance_cadence_blocks must be a positive integer")

    @property
    def cost_rate(self) -> float:
        return self.commission_rate + self.half_spread_rate


def _inputs(weights, prices, v0) -> tuple[np.ndarray, np.ndarray]:
    w = np.asarray(weights, dtype=float)
    p = np.asarray(prices, dtype=float)
    if w.ndim != 2 or p.ndim != 2 or w.shape != p.shape:
        raise ValueError(f"weights {w.shape} and prices {p.shape} must be equal-shape (blocks, tokens)")
    if w.shape[0] == 0:
        raise ValueError("series are empty")
    if not v0 > 0:
        raise ValueError("v0 must be positive")
    if np.any(p <= 0):
        raise ValueError("prices must be positive")
    return w, p


def _growth(alloc: np.ndarray, rel: np.ndarray) -> float:
    # 1 + sum(a * (r - 1)) is exactly 1 when prices do not move
    return 1.0 + float(np.dot(alloc, rel - 1.0))


def lvr_series(weights, prices, v0: float) -> np.ndarray:
    """Value of a portfolio rebalanced to ``weights[t]`` for free at every block."""
    w, p = _inputs(weights, prices, v0)
    v = np.empty(len(w))
    v[0] = v0
    for t in range(len(w) - 1):
        v[t + 1] = v[t] * _growth(w[t], p[t + 1] / p[t])
    return v


def rvr_series(weights, prices, v0: float, params: BenchmarkParams = BenchmarkParams()) -> np.ndarray:
    """LVR with a cost of ``cost_rate * V * sum|w - theta|`` at each rebalance.

    Between rebalances (cadence > 1) holdings drift with prices.
    """
    w, p = _inputs(weights, prices, v0)
    cadence = int(params.rebalance_cadence_blocks)
    rate = params.cost_rate
    v = np.empty(len(w))
    v[0] = v0
    alloc = w[0]
    for t in range(len(w) - 1):
        rel = p[t + 1] / p[t]
        growth = _growth(alloc, rel)
        value = v[t] * growth
        if (t + 1) % cadence == 0:
            theta = alloc * rel / growth
            value -= rate * value * np.abs(w[t + 1] - theta).sum()
            alloc = w[t + 1]
        else:
            alloc = alloc * rel / growth
        v[t + 1] = value
    return v


def relative_performance(pool_values, bench_values) -> np.ndarray:
    """Percentage points by which the pool's growth beats the benchmark's."""
    a = np.asarray(pool_values, dtype=float)
    b = np.asarray(bench_values, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("series lengths differ")
    if a.size == 0:
        return np.zeros(0)
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("values must be positive")
    return 100.0 * (a / a[0] - b / b[0])


@dataclass(frozen=True)
class BenchmarkSeries:
    blocks: np.ndarray
    lvr_value_usd: np.ndarray
    rvr_value_usd: np.ndarray
    pool_value_usd: np.ndarray
    rel_perf_vs_lvr: np.ndarray
    rel_perf_vs_rvr: np.ndarray


def benchmark(
    blocks: Sequence[int],
    weights,
    prices,
    pool_values,
    params: BenchmarkParams = BenchmarkParams(),
) -> BenchmarkSeries:
    """Both benchmarks started at the pool's initial value."""
    pool = np.asarray(pool_values, dtype=float)
    v0 = float(pool[0])
    lvr = lvr_series(weights, prices, v0)
    rvr = rvr_series(weights, prices, v0, params)
    return BenchmarkSeries(
        blocks=np.asarray(blocks),
        lvr_value_usd=lvr,
        rvr_value_usd=rvr,
        pool_value_usd=pool,
        rel_perf_vs_lvr=relative_performance(pool, lvr),
        rel_perf_vs_rvr=relative_performance(pool, rvr),
    )


def benchmark_records(records, params: BenchmarkParams = BenchmarkParams()) -> BenchmarkSeries:
    """Benchmark a loaded or simulated trace (a list of block records)."""
    if not records:
        raise ValueError("trace is empty")
    weights = np.array([r.weights for r in records])
    prices = np.array([r.prices_usd for r in records])
    values = np.array([float(np.dot(r.reserves, r.prices_usd)) for r in records])
    return benchmark([r.block for r in records], weights, prices, values, params)


def write_benchmark_csv(series: BenchmarkSeries, path: str | os.PathLike) -> None:
    path = Path(path)
    cols = ("lvr_value_usd", "rvr_value_usd", "pool_value_usd", "rel_perf_vs_lvr", "rel_perf_vs_rvr")
    header = "block,lvr_value,rvr_value,pool_value,rel_perf_vs_lvr,rel_perf_vs_rvr"
    lines = [header]
    for k, b in enumerate(series.blocks):
        lines.append(",".join([str(int(b))] + [repr(float(getattr(series, c)[k])) for c in cols]))
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    os.replace(tmp, path)
