"""Block-by-block simulation of the rebalancing auction.

Each block runs, in order:

1. weights are set from the trajectory;
2. external prices advance;
3. standalone arbitrageurs (in priority order) size their strike and take it
   if its profit covers their gas threshold; at most one strike per block;
4. incidental routers that arrive push a small swap through the pool in the
   direction that most reduces allocation drift, profitable or not;
5. the block is recorded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .arb import ArbTrade, greedy_legs, optimal_arb_multi, simultaneous_flow_optimum
from .classify import INCIDENTAL_CUTOFF_USD, TradeClass, classify, stale_weights
from .pool import (
    PoolError,
    PoolState,
    allocation_drift,
    execute_flows,
    execute_swap,
    pool_value,
)
from .schedule import WeightTrajectory

__all__ = [
    "ConfigError",
    "GasModel",
    "threshold",
    "threshold_usd",
    "StandaloneArb",
    "IncidentalRouter",
    "ConstantPrices",
    "GeometricBrownian",
    "ReplayPrices",
    "SimConfig",
    "SimTrade",
    "SimBlock",
    "SimTrace",
    "run",
]

SECONDS_PER_YEAR = 365.0 * 24 * 3600


class ConfigError(ValueError):
    """Invalid simulation configuration."""


def threshold_usd(base_fee_gwei: float, gas_units: float, eth_price_usd: float, markup: float) -> float:
    return base_fee_gwei * gas_units * eth_price_usd * markup / 1e9


def _series(value: float | Sequence[float], name: str) -> float | np.ndarray:
    if np.ndim(value) == 0:
        return float(value)  # type: ignore[arg-type]
    arr = np.array(value, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ConfigError(f"{name} must be a number or a non-empty 1-D series")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GasModel:
    """Per-block standalone profitability threshold.

    ``base_fee_gwei`` and ``eth_price_usd`` may be constants or per-block
    series starting at ``start_block``.
    """

    base_fee_gwei: float | np.ndarray = 0.55
    gas_units: int = 450_000
    eth_price_usd: float | np.ndarray = 3000.0
    markup: float = 1.5
    start_block: int = 0

    def __post_init__(self) -> None:
        base = _series(self.base_fee_gwei, "base_fee_gwei")
        eth = _series(self.eth_price_usd, "eth_price_usd")
        if np.any(np.asarray(base) < 0):
            raise ConfigError("base fee must be non-negative")
        if np.any(np.asarray(eth) <= 0):
            raise ConfigError("ETH price must be positive")
        if self.gas_units <= 0:
            raise ConfigError("gas_units must be positive")
        if self.markup < 1:
            raise ConfigError("markup must be >= 1")
        object.__setattr__(self, "base_fee_gwei", base)
        object.__setattr__(self, "eth_price_usd", eth)

    def _at(self, series: float | np.ndarray, block: int, name: str) -> float:
        if isinstance(series, float):
            return series
        k = block - self.start_block
        if not 0 <= k < series.size:
            raise ConfigError(f"block {block} outside the {name} series")
        return float(series[k])

    def base_fee_at(self, block: int) -> float:
        return self._at(self.base_fee_gwei, block, "base fee")

    def eth_price_at(self, block: int) -> float:
        return self._at(self.eth_price_usd, block, "ETH price")

    def threshold(self, block: int) -> float:
        return threshold(block, self)


def threshold(block: int, gas: GasModel) -> float:
    """baseFee * G * p_ETH * markup / 1e9, in USD."""
    return threshold_usd(gas.base_fee_at(block), gas.gas_units, gas.eth_price_at(block), gas.markup)


def _check_active(active: tuple[int, int] | None) -> None:
    if active is not None and not active[0] < active[1]:
        raise ConfigError("active window must be (start, stop) with start < stop")


@dataclass(frozen=True)
class StandaloneArb:
    """Arbitrageur who trades only when the pool alone pays for the gas.

    ``sizing="grid"`` picks the best of ``trade_size_grid`` (USD notionals of
    the paid-in leg) on the most profitable pair instead of the exact optimum.
    ``active`` limits the agent to blocks ``start <= b < stop``.
    """

    gas: GasModel = field(default_factory=GasModel)
    name: str = "arb"
    sizing: str = "optimal"
    trade_size_grid: tuple[float, ...] = ()
    active: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        if self.sizing not in ("optimal", "grid"):
            raise ConfigError(f"unknown sizing policy {self.sizing!r}")
        if self.sizing == "grid" and not self.trade_size_grid:
            raise ConfigError("grid sizing needs a non-empty trade_size_grid")
        if any(s <= 0 for s in self.trade_size_grid):
            raise ConfigError("grid trade sizes must be positive")
        _check_active(self.active)


@dataclass(frozen=True)
class IncidentalRouter:
    """Multi-venue router that passes a small swap through the pool."""

    notional_usd: tuple[float, float] = (20.0, 80.0)
    arrival_prob: float = 0.5
    name: str = "router"
    active: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        lo, hi = self.notional_usd
        if not 0 < lo <= hi:
            raise ConfigError("router notional range must be positive and ordered")
        if not 0 <= self.arrival_prob <= 1:
            raise ConfigError("arrival_prob must be in [0, 1]")
        _check_active(self.active)


Agent = Union[StandaloneArb, IncidentalRouter]


def _is_active(agent: Agent, block: int) -> bool:
    return agent.active is None or agent.active[0] <= block < agent.active[1]


@dataclass(frozen=True)
class ConstantPrices:
    prices: Sequence[float]

    def path(self, n_blocks: int, n_tokens: int, block_time: float) -> np.ndarray:
        p = np.asarray(self.prices, dtype=float)
        if p.shape != (n_tokens,):
            raise ConfigError("constant price vector has the wrong length")
        return np.tile(p, (n_blocks, 1))


@dataclass(frozen=True)
class GeometricBrownian:
    """Independent GBM per token; drift and vol are annualised.

    Block 0 sits at ``initial``; a token with zero vol and drift stays put.
    """

    initial: Sequence[float]
    drift: float | Sequence[float] = 0.0
    vol: float | Sequence[float] = 0.5
    seed: int = 0

    def path(self, n_blocks: int, n_tokens: int, block_time: float) -> np.ndarray:
        p0 = np.asarray(self.initial, dtype=float)
        if p0.shape != (n_tokens,):
            raise ConfigError("GBM initial prices have the wrong length")
        mu = np.broadcast_to(np.asarray(self.drift, dtype=float), (n_tokens,))
        sigma = np.broadcast_to(np.asarray(self.vol, dtype=float), (n_tokens,))
        if np.any(sigma < 0):
            raise ConfigError("volatility must be non-negative")
        dt = block_time / SECONDS_PER_YEAR
        rng = np.random.default_rng(self.seed)
        z = rng.standard_normal((n_blocks - 1, n_tokens))
        steps = (mu - 0.5 * sigma**2) * dt + sigma * math.sqrt(dt) * z
        log_path = np.vstack([np.zeros(n_tokens), np.cumsum(steps, axis=0)])
        return p0 * np.exp(log_path)


@dataclass(frozen=True)
class ReplayPrices:
    series: np.ndarray

    def path(self, n_blocks: int, n_tokens: int, block_time: float) -> np.ndarray:
        s = np.asarray(self.series, dtype=float)
        if s.ndim != 2 or s.shape[1] != n_tokens:
            raise ConfigError("replay series must be (blocks, tokens)")
        if s.shape[0] < n_blocks:
            raise ConfigError(f"replay series has {s.shape[0]} rows, need {n_blocks}")
        if np.any(s <= 0) or not np.all(np.isfinite(s)):
            raise ConfigError("replay prices must be finite and positive")
        return s[:n_blocks].copy()


PriceProcess = Union[ConstantPrices, GeometricBrownian, ReplayPrices]


@dataclass(frozen=True)
class SimConfig:
    pool: PoolState
    trajectory: WeightTrajectory
    prices: PriceProcess
    agents: tuple[Agent, ...] = ()
    n_blocks: int = 600
    block_time_seconds: float = 12.0
    start_block: int = 0
    start_timestamp: float = 0.0
    seed: int = 0
    round_robin: bool = True
    stale_mode: str = "last_trade"
    incidental_cutoff_usd: float = INCIDENTAL_CUTOFF_USD

    def validate(self) -> None:
        if self.n_blocks < 1:
            raise ConfigError("n_blocks must be >= 1")
        if self.block_time_seconds <= 0:
            raise ConfigError("block_time_seconds must be positive")
        if self.trajectory.n_tokens != self.pool.n_tokens:
            raise ConfigError("trajectory and pool disagree on the number of tokens")
        if self.start_block < self.trajectory.start_block:
            raise ConfigError("simulation starts before the weight trajectory")
        for agent in self.agents:
            if not isinstance(agent, (StandaloneArb, IncidentalRouter)):
                raise ConfigError(f"unknown agent type {type(agent).__name__}")
        names = [a.name for a in self.agents]
        if len(set(names)) != len(names):
            raise ConfigError("agent names must be unique")


@dataclass(frozen=True)
class SimTrade:
    """One strike or routed swap. ``flows`` are paid into the pool by the trader."""

    block: int
    agent: str
    kind: str
    flows: np.ndarray
    profit_usd: float
    skim_usd: float
    threshold_usd: float
    opportunity_usd: float
    label: TradeClass
    legs: tuple[ArbTrade, ...] = ()


@dataclass(frozen=True)
class SimBlock:
    block: int
    timestamp: float
    weights: np.ndarray
    reserves: np.ndarray
    prices: np.ndarray
    base_fee_gwei: float
    eth_price_usd: float
    drift_pre: float
    allocation_drift: float
    opportunity_usd: float
    threshold_usd: float
    pool_value_usd: float
    trades: tuple[SimTrade, ...]
    cum_empirical_usd: float
    cum_theoretical_usd: float
    cum_skim_usd: float


@dataclass
class SimTrace:
    config: SimConfig
    blocks: list[SimBlock]

    def __len__(self) -> int:
        return len(self.blocks)

    @property
    def trades(self) -> list[SimTrade]:
        return [t for b in self.blocks for t in b.trades]

    @property
    def strikes(self) -> list[SimTrade]:
        return [t for t in self.trades if t.kind == "standalone"]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(b, name) for b in self.blocks])

    @property
    def initial_value_usd(self) -> float:
        return pool_value(self.config.pool.with_weights(self.blocks[0].weights), self.blocks[0].prices)

    def records(self):
        """Blocks in the analyser's trace schema."""
        from .trace import BlockRecord

        return [
            BlockRecord(
                block=b.block,
                timestamp=b.timestamp,
                reserves=b.reserves,
                weights=b.weights,
                prices_usd=b.prices,
                base_fee_gwei=b.base_fee_gwei,
                eth_price_usd=b.eth_price_usd,
            )
            for b in self.blocks
        ]


def _leanest_gas(agents: Sequence[Agent]) -> GasModel | None:
    gases = [a.gas for a in agents if isinstance(a, StandaloneArb)]
    return gases[0] if gases else None


def _strike(
    agent: StandaloneArb, pool: PoolState, prices: np.ndarray
) -> tuple[PoolState, np.ndarray, np.ndarray, float, tuple[ArbTrade, ...]] | None:
    """Execute the agent's sizing policy. Returns (pool, flows, skim, profit, legs)."""
    if agent.sizing == "optimal":
        legs, greedy_pool = greedy_legs(pool, prices)
        greedy_profit = float(sum(t.profit_usd for t in legs))
        sim_profit, flows = simultaneous_flow_optimum(pool, prices)
        if sim_profit > greedy_profit and np.any(flows != 0):
            res = execute_flows(pool, flows)
            profit = float(-np.dot(prices, res.flows))
            return res.pool, res.flows, res.skim, profit, ()
        if not legs:
            return None
        flows = np.zeros(pool.n_tokens)
        skim = np.zeros(pool.n_tokens)
        state = pool
        for leg in legs:
            r = execute_swap(state, leg.token_in, leg.token_out, leg.amount_in)
            flows[leg.token_in] += leg.amount_in
            flows[leg.token_out] -= r.amount_out
            skim[r.skim_token] += r.skim_amount
            state = r.pool
        return state, flows, skim, greedy_profit, tuple(legs)

    legs, _ = greedy_legs(pool, prices)
    if not legs:
        return None
    i, j = legs[0].token_in, legs[0].token_out
    best = None
    for notional in agent.trade_size_grid:
        amount = notional / prices[i]
        try:
            r = execute_swap(pool, i, j, amount)
        except PoolError:
            continue
        profit = float(prices[j] * r.amount_out - prices[i] * amount)
        if best is None or profit > best[0]:
            best = (profit, amount, r)
    if best is None:
        return None
    profit, amount, r = best
    flows = np.zeros(pool.n_tokens)
    flows[i], flows[j] = amount, -r.amount_out
    skim = np.zeros(pool.n_tokens)
    skim[r.skim_token] = r.skim_amount
    leg = ArbTrade(i, j, amount, r.amount_out, profit)
    return r.pool, flows, skim, profit, (leg,)


def _route(
    router: IncidentalRouter, pool: PoolState, prices: np.ndarray, rng: np.random.Generator
) -> tuple[PoolState, np.ndarray, np.ndarray, float] | None:
    """Arrival draw, notional draw, then the most drift-reducing pairwise swap."""
    arrived = rng.random() < router.arrival_prob
    notional = rng.uniform(*router.notional_usd)
    if not arrived:
        return None
    before = allocation_drift(pool, prices)
    best = None
    n = pool.n_tokens
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            amount = notional / prices[i]
            try:
                r = execute_swap(pool, i, j, amount)
            except PoolError:
                continue
            after = allocation_drift(r.pool, prices)
            if after < before and (best is None or after < best[0]):
                best = (after, i, j, amount, r)
    if best is None:
        return None
    _, i, j, amount, r = best
    flows = np.zeros(n)
    flows[i], flows[j] = amount, -r.amount_out
    skim = np.zeros(n)
    skim[r.skim_token] = r.skim_amount
    profit = float(prices[j] * r.amount_out - prices[i] * amount)
    return r.pool, flows, skim, profit


def run(config: SimConfig) -> SimTrace:
    """Simulate ``config.n_blocks`` blocks. Deterministic for a given config."""
    config.validate()
    n = config.pool.n_tokens
    price_path = config.prices.path(config.n_blocks, n, config.block_time_seconds)
    if price_path.shape != (config.n_blocks, n):
        raise ConfigError("price process returned the wrong shape")
    rng = np.random.default_rng(config.seed)
    standalone = [a for a in config.agents if isinstance(a, StandaloneArb)]
    routers = [a for a in config.agents if isinstance(a, IncidentalRouter)]
    gas_ref = _leanest_gas(config.agents)

    pool = config.pool
    weight_hist: list[np.ndarray] = []
    last_trade_idx: int | None = None
    cum_emp = cum_theo = cum_skim = 0.0
    blocks: list[SimBlock] = []

    for t in range(config.n_blocks):
        block = config.start_block + t
        weights = config.trajectory.weights_at(block)
        pool = pool.with_weights(weights)
        prices = price_path[t]
        weight_hist.append(weights)
        drift_pre = allocation_drift(pool, prices)
        opp = optimal_arb_multi(pool, prices)
        opportunity = opp.theoretical_max_profit_usd
        thresholds = [a.gas.threshold(block) for a in standalone]
        block_threshold = min(thresholds) if thresholds else (
            gas_ref.threshold(block) if gas_ref else math.nan
        )
        stale = stale_weights(weight_hist, t, last_trade_idx, config.stale_mode)
        trades: list[SimTrade] = []

        def record(kind, agent_name, pre_pool, flows, skim, profit, thr, legs=()):
            label, _ = classify(
                pre_pool, prices, profit, stale, config.incidental_cutoff_usd
            )
            trades.append(
                SimTrade(
                    block=block,
                    agent=agent_name,
                    kind=kind,
                    flows=flows,
                    profit_usd=profit,
                    skim_usd=float(np.dot(prices, skim)),
                    threshold_usd=thr,
                    opportunity_usd=opportunity,
                    label=label,
                    legs=tuple(legs),
                )
            )

        order = list(range(len(standalone)))
        if config.round_robin and standalone:
            k = t % len(standalone)
            order = order[k:] + order[:k]
        for idx in order:
            agent = standalone[idx]
            if not _is_active(agent, block) or not opp.exists:
                continue
            result = _strike(agent, pool, prices)
            if result is None:
                continue
            new_pool, flows, skim, profit, legs = result
            if profit - thresholds[idx] >= 0 and profit > 0:
                record("standalone", agent.name, pool, flows, skim, profit, thresholds[idx], legs)
                pool = new_pool
                break

        for router in routers:
            if not _is_active(router, block):
                continue
            routed = _route(router, pool, prices, rng)
            if routed is None:
                continue
            new_pool, flows, skim, profit = routed
            record("incidental", router.name, pool, flows, skim, profit, block_threshold)
            pool = new_pool

        if trades:
            # a block's trades net into one balance change, so classify them once
            last_trade_idx = t
            cum_theo += opportunity
        for tr in trades:
            cum_emp += tr.profit_usd
            cum_skim += tr.skim_usd

        gas_for_record = gas_ref or GasModel(base_fee_gwei=0.0)
        blocks.append(
            SimBlock(
                block=block,
                timestamp=config.start_timestamp + t * config.block_time_seconds,
                weights=weights,
                reserves=pool.reserves,
                prices=prices.copy(),
                base_fee_gwei=gas_for_record.base_fee_at(block),
                eth_price_usd=gas_for_record.eth_price_at(block),
                drift_pre=drift_pre,
                allocation_drift=allocation_drift(pool, prices),
                opportunity_usd=opportunity,
                threshold_usd=block_threshold,
                pool_value_usd=pool_value(pool, prices),
                trades=tuple(trades),
                cum_empirical_usd=cum_emp,
                cum_theoretical_usd=cum_theo,
                cum_skim_usd=cum_skim,
            )
        )
    return SimTrace(config=config, blocks=blocks)
