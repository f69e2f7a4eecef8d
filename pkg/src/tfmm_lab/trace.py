"""Per-block pool traces: loading, trade detection, labelling and window reports.

CSV schema, one row per block, header required::

    block,timestamp,reserve_0..reserve_{N-1},weight_0..weight_{N-1},
    price_0..price_{N-1},base_fee_gwei,eth_price_usd[,gas_used,priority_fee_gwei,tip_usd]

The JSON form is an array of objects with the same keys.
"""

from __future__ import annotations

import csv
import json
import math
import os
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .arb import optimal_arb_multi
from .classify import (
    INCIDENTAL_CUTOFF_USD,
    TradeClass,
    classify,
    stale_weights,
)
from .pool import PoolError, PoolState, allocation_drift, pool_value
from .sim import threshold_usd

__all__ = [
    "TraceError",
    "BlockRecord",
    "TradeRecord",
    "AnalysisConfig",
    "WindowReport",
    "load_trace",
    "write_trace",
    "detect_trades",
    "classify_trade",
    "window_report",
    "efficiency_ratio",
    "mean_trade_spacing",
    "block_series",
    "write_report",
]

OPTIONAL_COLUMNS = ("gas_used", "priority_fee_gwei", "tip_usd")
WEIGHT_SUM_TOL = 1e-9
OVERSHOOT_TOL = 1e-6  # efficiency above 1 by more than rounding is flagged


class TraceError(ValueError):
    """Malformed trace input; the message carries the offending line."""


@dataclass(frozen=True, eq=False)
class BlockRecord:
    block: int
    timestamp: float
    reserves: np.ndarray
    weights: np.ndarray
    prices_usd: np.ndarray
    base_fee_gwei: float
    eth_price_usd: float
    gas_used: float | None = None
    priority_fee_gwei: float | None = None
    tip_usd: float | None = None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BlockRecord):
            return NotImplemented
        return (
            self.block == other.block
            and self.timestamp == other.timestamp
            and np.array_equal(self.reserves, other.reserves)
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.prices_usd, other.prices_usd)
            and self.base_fee_gwei == other.base_fee_gwei
            and self.eth_price_usd == other.eth_price_usd
            and self.gas_used == other.gas_used
            and self.priority_fee_gwei == other.priority_fee_gwei
            and self.tip_usd == other.tip_usd
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def n_tokens(self) -> int:
        return len(self.reserves)


@dataclass(frozen=True)
class TradeRecord:
    block: int
    index: int
    balance_deltas: np.ndarray
    observed_deltas: np.ndarray
    tokens_in: tuple[int, ...]
    tokens_out: tuple[int, ...]
    empirical_profit_usd: float
    threshold_usd: float
    opportunity_usd: float
    classification: TradeClass
    missing_reference: bool = False


@dataclass(frozen=True)
class AnalysisConfig:
    swap_fee_rate: float = 0.003
    protocol_fee_share: float = 0.5
    fee_on_input: bool = True
    dust_rel: float = 1e-9
    incidental_cutoff_usd: float = INCIDENTAL_CUTOFF_USD
    stale_mode: str = "last_trade"
    stale_lag: int = 1
    include_price_driven: bool = False
    markout_blocks: int = 0
    gas_units: int = 450_000
    markup: float = 1.5


# ---------------------------------------------------------------- loading


def _header_layout(header: Sequence[str]) -> int:
    cols = [h.strip() for h in header]
    if cols[:2] != ["block", "timestamp"]:
        raise TraceError("line 1: header must start with block,timestamp")
    n = sum(1 for c in cols if re.fullmatch(r"reserve_\d+", c))
    expected = _columns_for(n)
    if n < 2 or cols[: len(expected)] != expected:
        raise TraceError(f"line 1: header does not match the trace schema for {n} tokens")
    extra = cols[len(expected) :]
    if extra and extra != list(OPTIONAL_COLUMNS[: len(extra)]):
        raise TraceError(f"line 1: unexpected trailing columns {extra}")
    return n


def _record_from_values(values: dict, n: int, where: str) -> BlockRecord:
    def num(key: str) -> float:
        if key not in values:
            raise TraceError(f"{where}: missing field {key!r}")
        try:
            x = float(values[key])
        except (TypeError, ValueError):
            raise TraceError(f"{where}: field {key!r} is not a number") from None
        if not math.isfinite(x):
            raise TraceError(f"{where}: field {key!r} is not finite")
        return x

    block_f = num("block")
    if block_f != int(block_f):
        raise TraceError(f"{where}: block must be an integer")
    reserves = np.array([num(f"reserve_{i}") for i in range(n)])
    weights = np.array([num(f"weight_{i}") for i in range(n)])
    prices = np.array([num(f"price_{i}") for i in range(n)])
    if np.any(reserves < 0):
        raise TraceError(f"{where}: negative reserve")
    if np.any(weights <= 0) or np.any(weights >= 1):
        raise TraceError(f"{where}: weights must lie strictly in (0, 1)")
    if abs(weights.sum() - 1.0) > WEIGHT_SUM_TOL:
        raise TraceError(f"{where}: weights sum to {weights.sum():.12g}, not 1")
    if np.any(prices <= 0):
        raise TraceError(f"{where}: prices must be positive")
    base_fee = num("base_fee_gwei")
    eth = num("eth_price_usd")
    if base_fee < 0 or eth <= 0:
        raise TraceError(f"{where}: invalid gas fields")
    opt = {}
    for key in OPTIONAL_COLUMNS:
        v = values.get(key)
        opt[key] = None if v is None or v == "" else num(key)
    for arr in (reserves, weights, prices):
        arr.setflags(write=False)
    return BlockRecord(
        block=int(block_f),
        timestamp=num("timestamp"),
        reserves=reserves,
        weights=weights,
        prices_usd=prices,
        base_fee_gwei=base_fee,
        eth_price_usd=eth,
        **opt,
    )


def _check_monotone(records: list[BlockRecord], lines: list[int]) -> None:
    for k in range(1, len(records)):
        if records[k].block <= records[k - 1].block:
            raise TraceError(
                f"line {lines[k]}: block {records[k].block} does not follow block "
                f"{records[k - 1].block}"
            )


def load_trace(path: str | os.PathLike, format: str | None = None) -> list[BlockRecord]:
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".") or "csv").lower()
    text = path.read_text()
    if not text.strip():
        return []
    records: list[BlockRecord] = []
    lines: list[int] = []
    if fmt == "csv":
        reader = csv.reader(text.splitlines())
        header = next(reader)
        n = _header_layout(header)
        keys = [h.strip() for h in header]
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(keys):
                raise TraceError(f"line {lineno}: expected {len(keys)} fields, got {len(row)}")
            records.append(_record_from_values(dict(zip(keys, row)), n, f"line {lineno}"))
            lines.append(lineno)
    elif fmt == "json":
        try:
            rows = json.loads(text)
        except json.JSONDecodeError as exc:
            raise TraceError(f"line {exc.lineno}: invalid JSON ({exc.msg})") from None
        if not isinstance(rows, list):
            raise TraceError("line 1: JSON trace must be an array of objects")
        if rows:
            n = sum(1 for k in rows[0] if re.fullmatch(r"reserve_\d+", k))
            allowed = set(_columns_for(n)) | set(OPTIONAL_COLUMNS)
            for idx, row in enumerate(rows):
                if not isinstance(row, dict):
                    raise TraceError(f"record {idx}: expected an object")
                unknown = set(row) - allowed
                if unknown:
                    raise TraceError(f"record {idx}: unknown keys {sorted(unknown)}")
                records.append(_record_from_values(row, n, f"record {idx}"))
                lines.append(idx)
    else:
        raise TraceError(f"unsupported trace format {fmt!r}")
    _check_monotone(records, lines)
    return records


def _columns_for(n: int) -> list[str]:
    return (
        ["block", "timestamp"]
        + [f"reserve_{i}" for i in range(n)]
        + [f"weight_{i}" for i in range(n)]
        + [f"price_{i}" for i in range(n)]
        + ["base_fee_gwei", "eth_price_usd"]
    )


def _columns(records: Sequence[BlockRecord]) -> list[str]:
    cols = _columns_for(records[0].n_tokens)
    if any(getattr(r, k) is not None for r in records for k in OPTIONAL_COLUMNS):
        cols += list(OPTIONAL_COLUMNS)
    return cols


def _row(rec: BlockRecord, cols: list[str]) -> dict:
    out: dict = {"block": rec.block, "timestamp": float(rec.timestamp)}
    for prefix, vec in (("reserve", rec.reserves), ("weight", rec.weights), ("price", rec.prices_usd)):
        for i, v in enumerate(vec):
            out[f"{prefix}_{i}"] = float(v)
    out["base_fee_gwei"] = float(rec.base_fee_gwei)
    out["eth_price_usd"] = float(rec.eth_price_usd)
    for k in OPTIONAL_COLUMNS:
        if k in cols:
            v = getattr(rec, k)
            out[k] = None if v is None else float(v)
    return out


def atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_trace(records: Sequence[BlockRecord], path: str | os.PathLike, format: str | None = None) -> None:
    """Write records losslessly (floats use their shortest round-trip repr)."""
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".") or "csv").lower()
    if not records:
        atomic_write(path, "" if fmt == "csv" else "[]\n")
        return
    cols = _columns(records)
    rows = [_row(r, cols) for r in records]
    if fmt == "json":
        atomic_write(path, json.dumps(rows, indent=1) + "\n")
        return
    if fmt != "csv":
        raise TraceError(f"unsupported trace format {fmt!r}")
    lines = [",".join(cols)]
    for row in rows:
        lines.append(",".join("" if row[c] is None else repr(row[c]) for c in cols))
    atomic_write(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------- analysis


def _pool_at(rec_reserves: np.ndarray, weights: np.ndarray, cfg: AnalysisConfig) -> PoolState:
    w = np.asarray(weights, dtype=float)
    return PoolState(
        reserves=rec_reserves,
        weights=w / w.sum(),
        swap_fee_rate=cfg.swap_fee_rate,
        protocol_fee_share=cfg.protocol_fee_share,
        fee_on_input=cfg.fee_on_input,
    )


def _trader_deltas(observed: np.ndarray, cfg: AnalysisConfig) -> np.ndarray:
    """Undo the vault's fee skim so deltas reflect what the trader paid/received."""
    skim = cfg.protocol_fee_share * cfg.swap_fee_rate
    if cfg.fee_on_input:
        return np.where(observed > 0, observed / (1.0 - skim), observed)
    g = 1.0 - cfg.swap_fee_rate
    return np.where(observed < 0, observed / (1.0 + skim / g), observed)


def _threshold(rec: BlockRecord, cfg: AnalysisConfig) -> float:
    return threshold_usd(rec.base_fee_gwei, cfg.gas_units, rec.eth_price_usd, cfg.markup)


def _opportunity(records: Sequence[BlockRecord], k: int, cfg: AnalysisConfig) -> float:
    """Theoretical optimum at the state the block's trades faced."""
    if k == 0:
        return 0.0
    pool = _pool_at(records[k - 1].reserves, records[k].weights, cfg)
    if np.any(pool.reserves <= 0):
        return 0.0
    return optimal_arb_multi(pool, records[k].prices_usd).theoretical_max_profit_usd


def classify_trade(
    trade: TradeRecord,
    records: Sequence[BlockRecord],
    cfg: AnalysisConfig = AnalysisConfig(),
    last_trade_idx: int | None = None,
) -> tuple[TradeClass, bool]:
    """Label a detected trade from its surrounding records.

    Returns ``(label, missing_reference)``; with no stale reference the
    price-driven test is skipped and the flag is set.
    """
    k = trade.index
    weights = [r.weights for r in records[: k + 1]]
    stale = stale_weights(weights, k, last_trade_idx, cfg.stale_mode, cfg.stale_lag)
    if k == 0:
        stale = None
    pre = _pool_at(records[k - 1].reserves if k > 0 else records[k].reserves, records[k].weights, cfg)
    return classify(
        pre,
        records[k].prices_usd,
        trade.empirical_profit_usd,
        stale,
        cfg.incidental_cutoff_usd,
    )


def detect_trades(
    records: Sequence[BlockRecord], cfg: AnalysisConfig = AnalysisConfig()
) -> list[TradeRecord]:
    """One trade per block whose reserves moved by more than dust."""
    trades: list[TradeRecord] = []
    last_trade_idx: int | None = None
    for k in range(1, len(records)):
        prev, cur = records[k - 1], records[k]
        observed = np.asarray(cur.reserves) - np.asarray(prev.reserves)
        scale = np.maximum(np.abs(prev.reserves), np.abs(cur.reserves))
        moved = np.abs(observed) > cfg.dust_rel * scale
        if not np.any(moved):
            continue
        observed = np.where(moved, observed, 0.0)
        deltas = _trader_deltas(observed, cfg)
        mark = records[min(k + cfg.markout_blocks, len(records) - 1)].prices_usd
        profit = float(-np.dot(mark, deltas))
        trade = TradeRecord(
            block=cur.block,
            index=k,
            balance_deltas=deltas,
            observed_deltas=observed,
            tokens_in=tuple(int(i) for i in np.flatnonzero(deltas > 0)),
            tokens_out=tuple(int(i) for i in np.flatnonzero(deltas < 0)),
            empirical_profit_usd=profit,
            threshold_usd=_threshold(cur, cfg),
            opportunity_usd=_opportunity(records, k, cfg),
            classification=TradeClass.WEIGHT_DRIVEN,
        )
        label, missing = classify_trade(trade, records, cfg, last_trade_idx)
        trades.append(
            TradeRecord(**{**trade.__dict__, "classification": label, "missing_reference": missing})
        )
        last_trade_idx = k
    return trades


def efficiency_ratio(total_empirical_usd: float, total_theoretical_usd: float) -> float:
    if total_theoretical_usd <= 0:
        return 0.0
    return total_empirical_usd / total_theoretical_usd


def mean_trade_spacing(n_blocks: int, n_trades: int) -> float:
    """Window length in blocks divided by the number of trades."""
    return n_blocks / n_trades if n_trades else math.inf


@dataclass
class WindowReport:
    n_blocks: int
    n_trades: int
    n_excluded: int
    extraction_per_trade_usd: float
    total_empirical_usd: float
    total_theoretical_usd: float
    efficiency_ratio: float
    max_allocation_drift: float
    mean_blocks_between_trades: float
    fraction_below_threshold: float
    label_counts: dict[str, int]
    flags: list[str] = field(default_factory=list)
    cumulative_empirical_usd: list[float] = field(default_factory=list, repr=False)
    cumulative_theoretical_usd: list[float] = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("cumulative_empirical_usd")
        d.pop("cumulative_theoretical_usd")
        if math.isinf(d["mean_blocks_between_trades"]):
            d["mean_blocks_between_trades"] = None
        return d


def window_report(
    records: Sequence[BlockRecord],
    trades: Sequence[TradeRecord],
    cfg: AnalysisConfig = AnalysisConfig(),
) -> WindowReport:
    """Window-level metrics.

    Aggregates run over the trades counted towards rebalancing: price-driven
    trades are left out unless ``cfg.include_price_driven``.
    """
    n_blocks = len(records)
    included = [
        t
        for t in trades
        if cfg.include_price_driven or t.classification is not TradeClass.PRICE_DRIVEN
    ]
    counts = {c.value: 0 for c in TradeClass}
    for t in trades:
        counts[t.classification.value] += 1
    flags: list[str] = []
    if not trades:
        flags.append("no trades in window")
    if any(t.missing_reference for t in trades):
        flags.append("stale-weight reference missing for some trades")

    emp = float(sum(t.empirical_profit_usd for t in included))
    theo = float(sum(t.opportunity_usd for t in included))
    eff = efficiency_ratio(emp, theo)
    if eff > 1.0 + OVERSHOOT_TOL:
        flags.append("empirical extraction exceeds theoretical optimum")
    if any(t.empirical_profit_usd < 0 for t in included):
        flags.append("negative-profit trades present")
    n_inc = len(included)
    below = sum(1 for t in included if t.empirical_profit_usd < t.threshold_usd)

    drifts = [
        allocation_drift(_pool_at(r.reserves, r.weights, cfg), r.prices_usd)
        for r in records
        if np.all(r.reserves > 0)
    ]
    by_index = {t.index: t for t in included}
    cum_e, cum_t = [], []
    acc_e = acc_t = 0.0
    for k in range(n_blocks):
        t = by_index.get(k)
        if t is not None:
            acc_e += t.empirical_profit_usd
            acc_t += t.opportunity_usd
        cum_e.append(acc_e)
        cum_t.append(acc_t)

    return WindowReport(
        n_blocks=n_blocks,
        n_trades=n_inc,
        n_excluded=len(trades) - n_inc,
        extraction_per_trade_usd=emp / n_inc if n_inc else 0.0,
        total_empirical_usd=emp,
        total_theoretical_usd=theo,
        efficiency_ratio=eff,
        max_allocation_drift=max(drifts) if drifts else 0.0,
        mean_blocks_between_trades=mean_trade_spacing(n_blocks, n_inc),
        fraction_below_threshold=below / n_inc if n_inc else 0.0,
        label_counts=counts,
        flags=flags,
        cumulative_empirical_usd=cum_e,
        cumulative_theoretical_usd=cum_t,
    )


def block_series(
    records: Sequence[BlockRecord],
    trades: Sequence[TradeRecord],
    report: WindowReport,
    cfg: AnalysisConfig = AnalysisConfig(),
) -> list[dict]:
    """Per-block rows behind the drift / opportunity / weights / cumulative panels."""
    by_index = {t.index: t for t in trades}
    rows = []
    for k, rec in enumerate(records):
        pool = _pool_at(rec.reserves, rec.weights, cfg)
        t = by_index.get(k)
        row = {
            "block": rec.block,
            "allocation_drift": allocation_drift(pool, rec.prices_usd),
            "opportunity_usd": _opportunity(records, k, cfg),
            "threshold_usd": _threshold(rec, cfg),
            "pool_value_usd": pool_value(pool, rec.prices_usd),
            "trade": int(t is not None),
            "trade_profit_usd": t.empirical_profit_usd if t else 0.0,
            "label": t.classification.value if t else "",
            "cum_empirical_usd": report.cumulative_empirical_usd[k],
            "cum_theoretical_usd": report.cumulative_theoretical_usd[k],
        }
        for i, w in enumerate(rec.weights):
            row[f"weight_{i}"] = float(w)
        rows.append(row)
    return rows


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_rows(path: Path, rows: list[dict]) -> None:
    if not rows:
        atomic_write(path, "")
        return
    cols = list(rows[0].keys())
    lines = [",".join(cols)] + [",".join(_fmt(r[c]) for c in cols) for r in rows]
    atomic_write(path, "\n".join(lines) + "\n")


def write_report(
    out_dir: str | os.PathLike,
    records: Sequence[BlockRecord],
    trades: Sequence[TradeRecord],
    report: WindowReport,
    cfg: AnalysisConfig = AnalysisConfig(),
) -> None:
    """report.json, blocks.csv and trades.csv under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write(out / "report.json", json.dumps(report.summary(), indent=2, sort_keys=True) + "\n")
    _write_rows(out / "blocks.csv", block_series(records, trades, report, cfg))
    trade_rows = [
        {
            "block": t.block,
            "tokens_in": " ".join(map(str, t.tokens_in)),
            "tokens_out": " ".join(map(str, t.tokens_out)),
            "empirical_profit_usd": t.empirical_profit_usd,
            "opportunity_usd": t.opportunity_usd,
            "threshold_usd": t.threshold_usd,
            "classification": t.classification.value,
            "missing_reference": int(t.missing_reference),
        }
        for t in trades
    ]
    _write_rows(out / "trades.csv", trade_rows)
