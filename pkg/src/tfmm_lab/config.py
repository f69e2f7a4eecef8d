"""YAML run configuration: schema, presets and builders.

A config is a mapping with these top-level keys (all optional, unknown keys
are rejected)::

    preset: july-mainnet        # start from a named preset, then override
    seed: 0
    trace: path/to/trace.csv    # input for analyze / benchmark
    simulation: {n_blocks, block_time_seconds, start_block, start_timestamp,
                 round_robin, stale_mode, incidental_cutoff_usd}
    pool:       {tokens, prices_usd, tvl_usd, reserves, weights,
                 swap_fee_rate, protocol_fee_share, fee_on_input}
    schedule:   {target_weights, activation_block, interpolation_blocks}
                or {updates: [{activation_block, target_weights, interpolation_blocks}]}
    prices:     {kind: constant|gbm|replay, drift, vol, seed, path}
    gas:        {base_fee_gwei, gas_units, eth_price_usd, markup}
    agents:     [{type: standalone|router, ...}]
    analysis:   {dust_rel, incidental_cutoff_usd, stale_mode, stale_lag,
                 include_price_driven, markout_blocks}
    benchmark:  {commission_rate, half_spread_rate, rebalance_cadence_blocks, grid}
    sweep:      {parameter: dotted.path, values: [...]}
"""

from __future__ import annotations

import copy
import csv
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .bench import BenchmarkParams
from .pool import PoolError, PoolState
from .schedule import WeightTrajectory, WeightUpdate
from .sim import (
    ConfigError,
    ConstantPrices,
    GasModel,
    GeometricBrownian,
    IncidentalRouter,
    ReplayPrices,
    SimConfig,
    StandaloneArb,
)
from .trace import AnalysisConfig

__all__ = [
    "PRESETS",
    "load_config",
    "resolve",
    "set_path",
    "build_sim_config",
    "build_gas",
    "build_analysis",
    "build_benchmark_params",
]

SCHEMA: dict[str, Any] = {
    "preset": None,
    "seed": None,
    "trace": None,
    "simulation": {
        "n_blocks", "block_time_seconds", "start_block", "start_timestamp",
        "round_robin", "stale_mode", "incidental_cutoff_usd",
    },
    "pool": {
        "tokens", "prices_usd", "tvl_usd", "reserves", "weights",
        "swap_fee_rate", "protocol_fee_share", "fee_on_input",
    },
    "schedule": {"target_weights", "activation_block", "interpolation_blocks", "updates"},
    "prices": {"kind", "drift", "vol", "seed", "path"},
    "gas": {"base_fee_gwei", "gas_units", "eth_price_usd", "markup"},
    "agents": None,
    "analysis": {
        "dust_rel", "incidental_cutoff_usd", "stale_mode", "stale_lag",
        "include_price_driven", "markout_blocks",
    },
    "benchmark": {"commission_rate", "half_spread_rate", "rebalance_cadence_blocks", "grid"},
    "sweep": {"parameter", "values"},
}
UPDATE_KEYS = {"activation_block", "target_weights", "interpolation_blocks"}
STANDALONE_KEYS = {"type", "name", "sizing", "trade_size_grid", "active", "markup", "gas_units"}
ROUTER_KEYS = {"type", "name", "notional_usd", "arrival_prob", "active"}
BENCH_KEYS = {"commission_rate", "half_spread_rate", "rebalance_cadence_blocks"}

# Pool compositions follow the two studied pools; price levels, vols and the
# weight path are illustrative choices, not observed values.
PRESETS: dict[str, dict] = {
    "july-mainnet": {
        "simulation": {"n_blocks": 606, "block_time_seconds": 12.0},
        "pool": {
            "tokens": ["BTC", "PAXG", "USDC"],
            "prices_usd": [118000.0, 3350.0, 1.0],
            "tvl_usd": 300_000.0,
            "weights": [0.34, 0.33, 0.33],
            "swap_fee_rate": 0.003,
            "protocol_fee_share": 0.5,
        },
        "schedule": {
            "target_weights": [0.30, 0.38, 0.32],
            "activation_block": 0,
            "interpolation_blocks": 606,
        },
        "prices": {"kind": "gbm", "vol": [0.25, 0.12, 0.0]},
        "gas": {"base_fee_gwei": 0.55, "gas_units": 450_000, "eth_price_usd": 3000.0, "markup": 1.5},
        "agents": [{"type": "standalone", "name": "arb"}],
    },
    "jan-mainnet": {
        "simulation": {"n_blocks": 591, "block_time_seconds": 12.0},
        "pool": {
            "tokens": ["BTC", "PAXG", "USDC"],
            "prices_usd": [95000.0, 4500.0, 1.0],
            "tvl_usd": 300_000.0,
            "weights": [0.34, 0.33, 0.33],
            "swap_fee_rate": 0.003,
            "protocol_fee_share": 0.5,
        },
        "schedule": {
            "target_weights": [0.30, 0.38, 0.32],
            "activation_block": 0,
            "interpolation_blocks": 591,
        },
        "prices": {"kind": "gbm", "vol": [0.25, 0.12, 0.0]},
        "gas": {"base_fee_gwei": 0.047, "gas_units": 450_000, "eth_price_usd": 3000.0, "markup": 1.5},
        "agents": [{"type": "standalone", "name": "arb"}],
    },
    "jan-base": {
        "simulation": {"n_blocks": 3600, "block_time_seconds": 2.0},
        "pool": {
            "tokens": ["AERO", "BTC", "ETH", "USDC"],
            "prices_usd": [0.5, 95000.0, 3300.0, 1.0],
            "tvl_usd": 50_000.0,
            "weights": [0.25, 0.25, 0.25, 0.25],
            "swap_fee_rate": 0.003,
            "protocol_fee_share": 0.5,
        },
        "schedule": {
            "target_weights": [0.22, 0.27, 0.27, 0.24],
            "activation_block": 0,
            "interpolation_blocks": 3600,
        },
        "prices": {"kind": "gbm", "vol": [0.8, 0.35, 0.45, 0.0]},
        "gas": {"base_fee_gwei": 0.047, "gas_units": 450_000, "eth_price_usd": 3300.0, "markup": 1.5},
        "agents": [
            {"type": "standalone", "name": "arb"},
            {"type": "router", "name": "router", "notional_usd": [20.0, 80.0], "arrival_prob": 0.5},
        ],
    },
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _check_keys(cfg: dict) -> None:
    unknown = set(cfg) - set(SCHEMA)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for section, keys in SCHEMA.items():
        if keys is None or section not in cfg:
            continue
        body = cfg[section]
        if not isinstance(body, dict):
            raise ConfigError(f"section {section!r} must be a mapping")
        bad = set(body) - keys
        if bad:
            raise ConfigError(f"unknown keys in {section!r}: {sorted(bad)}")
    for k, upd in enumerate(cfg.get("schedule", {}).get("updates", []) or []):
        if not isinstance(upd, dict) or set(upd) - UPDATE_KEYS:
            raise ConfigError(f"schedule.updates[{k}] must be a mapping with keys {sorted(UPDATE_KEYS)}")
    agents = cfg.get("agents", [])
    if not isinstance(agents, list):
        raise ConfigError("agents must be a list")
    for k, a in enumerate(agents):
        if not isinstance(a, dict):
            raise ConfigError(f"agents[{k}] must be a mapping")
        allowed = {"standalone": STANDALONE_KEYS, "router": ROUTER_KEYS}.get(a.get("type"))
        if allowed is None:
            raise ConfigError(f"agents[{k}].type must be 'standalone' or 'router'")
        bad = set(a) - allowed
        if bad:
            raise ConfigError(f"unknown keys in agents[{k}]: {sorted(bad)}")
    for k, point in enumerate(cfg.get("benchmark", {}).get("grid", []) or []):
        if not isinstance(point, dict) or set(point) - BENCH_KEYS:
            raise ConfigError(f"benchmark.grid[{k}] may only set {sorted(BENCH_KEYS)}")


def resolve(raw: dict | None) -> dict:
    """Apply the preset (if any) and validate keys."""
    raw = dict(raw or {})
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    _check_keys(raw)
    name = raw.get("preset")
    if name is None:
        return raw
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return _deep_merge(PRESETS[name], raw)


def load_config(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from None
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return resolve(raw)


def set_path(cfg: dict, dotted: str, value: Any) -> dict:
    """Copy of ``cfg`` with ``a.b.0.c`` set to ``value``."""
    out = copy.deepcopy(cfg)
    parts = dotted.split(".")
    node: Any = out
    for part in parts[:-1]:
        if isinstance(node, list):
            node = node[int(part)]
        else:
            node = node.setdefault(part, {})
    last = parts[-1]
    if isinstance(node, list):
        node[int(last)] = value
    else:
        node[last] = value
    _check_keys(out)
    return out


def _vec(value, name: str, n: int | None = None) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a list of numbers") from None
    if arr.ndim != 1 or (n is not None and arr.size != n):
        raise ConfigError(f"{name} must be a list of {n if n is not None else 'N'} numbers")
    return arr


def build_gas(cfg: dict, overrides: dict | None = None) -> GasModel:
    g = {**cfg.get("gas", {}), **(overrides or {})}
    try:
        return GasModel(**g)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _build_pool(cfg: dict) -> tuple[PoolState, np.ndarray]:
    p = cfg.get("pool")
    if not p:
        raise ConfigError("missing 'pool' section")
    if "weights" not in p or "prices_usd" not in p:
        raise ConfigError("pool needs 'weights' and 'prices_usd'")
    w = _vec(p["weights"], "pool.weights")
    prices = _vec(p["prices_usd"], "pool.prices_usd", w.size)
    if "reserves" in p:
        reserves = _vec(p["reserves"], "pool.reserves", w.size)
    elif "tvl_usd" in p:
        reserves = w * float(p["tvl_usd"]) / prices
    else:
        raise ConfigError("pool needs 'reserves' or 'tvl_usd'")
    try:
        pool = PoolState(
            reserves=reserves,
            weights=w,
            swap_fee_rate=float(p.get("swap_fee_rate", 0.003)),
            protocol_fee_share=float(p.get("protocol_fee_share", 0.5)),
            token_ids=tuple(p.get("tokens", ())),
            fee_on_input=bool(p.get("fee_on_input", True)),
        )
    except PoolError as exc:
        raise ConfigError(f"pool: {exc}") from None
    return pool, prices


def _build_trajectory(cfg: dict, pool: PoolState, start_block: int) -> WeightTrajectory:
    s = cfg.get("schedule", {})
    if "updates" in s and ("target_weights" in s):
        raise ConfigError("schedule takes either 'updates' or a single 'target_weights', not both")
    raw_updates = s.get("updates")
    if raw_updates is None and "target_weights" in s:
        raw_updates = [
            {
                "activation_block": s.get("activation_block", start_block),
                "target_weights": s["target_weights"],
                "interpolation_blocks": s.get("interpolation_blocks", 1),
            }
        ]
    updates = []
    for k, u in enumerate(raw_updates or []):
        try:
            updates.append(
                WeightUpdate(
                    activation_block=int(u["activation_block"]),
                    target_weights=_vec(u["target_weights"], f"schedule update {k}", pool.n_tokens),
                    interpolation_blocks=int(u.get("interpolation_blocks", 1)),
                )
            )
        except KeyError as exc:
            raise ConfigError(f"schedule update {k} lacks {exc}") from None
        except PoolError as exc:
            raise ConfigError(f"schedule update {k}: {exc}") from None
    try:
        return WeightTrajectory(np.asarray(pool.weights), tuple(updates), start_block=start_block)
    except ValueError as exc:
        raise ConfigError(f"schedule: {exc}") from None


def _read_price_csv(path: str, n: int) -> np.ndarray:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"replay price file not found: {p}")
    with p.open(newline="") as fh:
        reader = csv.DictReader(fh)
        cols = [f"price_{i}" for i in range(n)]
        if reader.fieldnames is None or any(c not in reader.fieldnames for c in cols):
            raise ConfigError(f"{p}: needs columns {cols}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            try:
                rows.append([float(row[c]) for c in cols])
            except (TypeError, ValueError):
                raise ConfigError(f"{p}: line {lineno}: bad price") from None
    return np.array(rows)


def _build_prices(cfg: dict, initial: np.ndarray, seed: int):
    pr = cfg.get("prices", {"kind": "constant"})
    kind = pr.get("kind", "constant")
    if kind == "constant":
        return ConstantPrices(tuple(initial))
    if kind == "gbm":
        return GeometricBrownian(
            initial=tuple(initial),
            drift=pr.get("drift", 0.0),
            vol=pr.get("vol", 0.5),
            seed=int(pr.get("seed", seed)),
        )
    if kind == "replay":
        if "path" not in pr:
            raise ConfigError("replay prices need a 'path'")
        return ReplayPrices(_read_price_csv(pr["path"], initial.size))
    raise ConfigError(f"unknown price kind {kind!r}")


def _active(value) -> tuple[int, int] | None:
    if value is None:
        return None
    if len(value) != 2:
        raise ConfigError("active must be [start, stop]")
    return int(value[0]), int(value[1])


def _build_agents(cfg: dict) -> tuple:
    agents = []
    for a in cfg.get("agents", []):
        if a["type"] == "standalone":
            gas_over = {k: a[k] for k in ("markup", "gas_units") if k in a}
            agents.append(
                StandaloneArb(
                    gas=build_gas(cfg, gas_over),
                    name=a.get("name", f"arb{len(agents)}"),
                    sizing=a.get("sizing", "optimal"),
                    trade_size_grid=tuple(float(x) for x in a.get("trade_size_grid", ())),
                    active=_active(a.get("active")),
                )
            )
        else:
            agents.append(
                IncidentalRouter(
                    notional_usd=tuple(float(x) for x in a.get("notional_usd", (20.0, 80.0))),
                    arrival_prob=float(a.get("arrival_prob", 0.5)),
                    name=a.get("name", f"router{len(agents)}"),
                    active=_active(a.get("active")),
                )
            )
    return tuple(agents)


def build_sim_config(cfg: dict, seed: int | None = None) -> SimConfig:
    """Turn a resolved config mapping into a validated SimConfig."""
    seed = int(cfg.get("seed", 0) if seed is None else seed)
    sim = cfg.get("simulation", {})
    start_block = int(sim.get("start_block", 0))
    pool, initial_prices = _build_pool(cfg)
    sc = SimConfig(
        pool=pool,
        trajectory=_build_trajectory(cfg, pool, start_block),
        prices=_build_prices(cfg, initial_prices, seed),
        agents=_build_agents(cfg),
        n_blocks=int(sim.get("n_blocks", 600)),
        block_time_seconds=float(sim.get("block_time_seconds", 12.0)),
        start_block=start_block,
        start_timestamp=float(sim.get("start_timestamp", 0.0)),
        seed=seed,
        round_robin=bool(sim.get("round_robin", True)),
        stale_mode=sim.get("stale_mode", "last_trade"),
        incidental_cutoff_usd=float(sim.get("incidental_cutoff_usd", 0.01)),
    )
    sc.validate()
    return sc


def build_analysis(cfg: dict) -> AnalysisConfig:
    """Analysis settings; fee terms and gas come from the pool and gas sections."""
    a = cfg.get("analysis", {})
    p = cfg.get("pool", {})
    g = cfg.get("gas", {})
    return AnalysisConfig(
        swap_fee_rate=float(p.get("swap_fee_rate", 0.003)),
        protocol_fee_share=float(p.get("protocol_fee_share", 0.5)),
        fee_on_input=bool(p.get("fee_on_input", True)),
        dust_rel=float(a.get("dust_rel", 1e-9)),
        incidental_cutoff_usd=float(a.get("incidental_cutoff_usd", 0.01)),
        stale_mode=a.get("stale_mode", "last_trade"),
        stale_lag=int(a.get("stale_lag", 1)),
        include_price_driven=bool(a.get("include_price_driven", False)),
        markout_blocks=int(a.get("markout_blocks", 0)),
        gas_units=int(g.get("gas_units", 450_000)),
        markup=float(g.get("markup", 1.5)),
    )


def build_benchmark_params(cfg: dict) -> list[BenchmarkParams]:
    """One parameter set, or one per ``benchmark.grid`` entry."""
    b = cfg.get("benchmark", {})
    base = {k: b[k] for k in BENCH_KEYS if k in b}
    points = b.get("grid") or [{}]
    out = []
    for point in points:
        try:
            out.append(BenchmarkParams(**{**base, **point}))
        except ValueError as exc:
            raise ConfigError(f"benchmark: {exc}") from None
    return out
