"""Geometric-mean pool state, pricing and swap execution.

All amounts are plain floats. Prices are USD per token; pairwise prices are
ratios of those. Swap fees are charged on the input leg by default and the
vault's protocol share of each fee is removed from the pool at swap time.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

__all__ = [
    "PoolError",
    "PoolState",
    "NoArbBand",
    "SwapResult",
    "FlowResult",
    "as_prices",
    "invariant_k",
    "quoted_price",
    "value_allocation",
    "allocation_drift",
    "no_arb_band",
    "quote_swap",
    "execute_swap",
    "execute_flows",
    "pool_value",
]

WEIGHT_SUM_TOL = 1e-12


class PoolError(ValueError):
    """Raised for degenerate pools or invalid swap arguments."""


def _frozen(values: Sequence[float] | np.ndarray) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PoolState:
    """One pool at one block.

    ``protocol_fee_share`` is the fraction of every swap fee the vault keeps;
    it leaves the pool entirely. ``fee_on_input=False`` switches to charging
    the fee on the output leg instead.
    """

    reserves: np.ndarray
    weights: np.ndarray
    swap_fee_rate: float = 0.003
    protocol_fee_share: float = 0.5
    token_ids: tuple[str, ...] = ()
    fee_on_input: bool = True

    def __post_init__(self) -> None:
        reserves = _frozen(self.reserves)
        weights = _frozen(self.weights)
        n = reserves.size
        if reserves.ndim != 1 or n < 2:
            raise PoolError("pool needs at least two tokens")
        if weights.shape != reserves.shape:
            raise PoolError("reserves and weights differ in length")
        if not np.all(np.isfinite(reserves)) or np.any(reserves < 0):
            raise PoolError("reserves must be finite and non-negative")
        if np.any(weights <= 0) or np.any(weights >= 1):
            raise PoolError(f"weights must lie strictly in (0, 1), got {weights.tolist()}")
        if abs(weights.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise PoolError(f"weights sum to {weights.sum()!r}, not 1")
        if not 0.0 <= self.swap_fee_rate < 1.0:
            raise PoolError("swap_fee_rate must be in [0, 1)")
        if not 0.0 <= self.protocol_fee_share <= 1.0:
            raise PoolError("protocol_fee_share must be in [0, 1]")
        ids = tuple(self.token_ids) if self.token_ids else tuple(f"T{i}" for i in range(n))
        if len(ids) != n or len(set(ids)) != n:
            raise PoolError("token_ids must be distinct, one per token")
        object.__setattr__(self, "reserves", reserves)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "token_ids", ids)

    @property
    def n_tokens(self) -> int:
        return self.reserves.size

    @property
    def gamma(self) -> float:
        return 1.0 - self.swap_fee_rate

    def with_weights(self, weights: Sequence[float] | np.ndarray) -> PoolState:
        return replace(self, weights=weights)

    def with_reserves(self, reserves: Sequence[float] | np.ndarray) -> PoolState:
        return replace(self, reserves=reserves)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PoolState):
            return NotImplemented
        return (
            np.array_equal(self.reserves, other.reserves)
            and np.array_equal(self.weights, other.weights)
            and self.swap_fee_rate == other.swap_fee_rate
            and self.protocol_fee_share == other.protocol_fee_share
            and self.token_ids == other.token_ids
            and self.fee_on_input == other.fee_on_input
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class NoArbBand:
    lower: float
    upper: float
    quoted_mid: float

    def contains(self, price: float) -> bool:
        return self.lower <= price <= self.upper


@dataclass(frozen=True)
class SwapResult:
    pool: PoolState
    amount_out: float
    fee_amount: float
    skim_amount: float
    skim_token: int


@dataclass(frozen=True)
class FlowResult:
    pool: PoolState
    flows: np.ndarray
    skim: np.ndarray


def as_prices(prices: Sequence[float] | np.ndarray, n: int | None = None) -> np.ndarray:
    p = np.asarray(prices, dtype=float)
    if p.ndim != 1 or (n is not None and p.size != n):
        raise PoolError("price vector has the wrong shape")
    if not np.all(np.isfinite(p)) or np.any(p <= 0):
        raise PoolError("prices must be finite and strictly positive")
    return p


def _check_pair(pool: PoolState, i: int, j: int) -> None:
    n = pool.n_tokens
    if not (0 <= i < n and 0 <= j < n):
        raise PoolError(f"token index out of range for {n}-token pool")
    if i == j:
        raise PoolError("token_in and token_out must differ")


def _require_positive_reserves(pool: PoolState) -> None:
    if np.any(pool.reserves <= 0):
        raise PoolError("degenerate pool: zero reserve")


def invariant_k(pool: PoolState) -> float:
    """prod(R_i ** w_i), evaluated in log space."""
    _require_positive_reserves(pool)
    return float(np.exp(np.dot(pool.weights, np.log(pool.reserves))))


def quoted_price(pool: PoolState, i: int, j: int) -> float:
    """Marginal price of one unit of token ``i`` in units of token ``j``."""
    _check_pair(pool, i, j)
    _require_positive_reserves(pool)
    r, w = pool.reserves, pool.weights
    return float((r[j] / w[j]) * (w[i] / r[i]))


def pool_value(pool: PoolState, prices: Sequence[float] | np.ndarray) -> float:
    p = as_prices(prices, pool.n_tokens)
    return float(np.dot(pool.reserves, p))


def value_allocation(pool: PoolState, prices: Sequence[float] | np.ndarray) -> np.ndarray:
    p = as_prices(prices, pool.n_tokens)
    values = pool.reserves * p
    total = values.sum()
    if total <= 0:
        raise PoolError("pool has zero value")
    return values / total


def allocation_drift(pool: PoolState, prices: Sequence[float] | np.ndarray) -> float:
    """Sum of |theta_i - w_i|; zero exactly when the pool quotes market prices."""
    theta = value_allocation(pool, prices)
    return float(np.abs(theta - pool.weights).sum())


def no_arb_band(pool: PoolState, i: int, j: int) -> NoArbBand:
    mid = quoted_price(pool, i, j)
    g = pool.gamma
    return NoArbBand(lower=g * mid, upper=mid / g, quoted_mid=mid)


def quote_swap(pool: PoolState, i: int, j: int, amount_in: float) -> float:
    """Amount of token ``j`` paid out for ``amount_in`` of token ``i``."""
    _check_pair(pool, i, j)
    if not amount_in > 0:
        raise PoolError("amount_in must be positive")
    _require_positive_reserves(pool)
    r, w, g = pool.reserves, pool.weights, pool.gamma
    ratio = w[i] / w[j]
    if pool.fee_on_input:
        base = r[i] / (r[i] + g * amount_in)
        return float(-r[j] * np.expm1(ratio * np.log(base)))
    base = r[i] / (r[i] + amount_in)
    return float(-g * r[j] * np.expm1(ratio * np.log(base)))


def execute_swap(pool: PoolState, i: int, j: int, amount_in: float) -> SwapResult:
    """Apply a swap, skimming the protocol share of the fee out of the pool.

    The input ``pool`` is left untouched.
    """
    amount_out = quote_swap(pool, i, j, amount_in)
    reserves = pool.reserves.copy()
    fee = pool.swap_fee_rate
    if pool.fee_on_input:
        fee_amount = fee * amount_in
        skim = pool.protocol_fee_share * fee_amount
        skim_token = i
        reserves[i] += amount_in - skim
        reserves[j] -= amount_out
    else:
        gross_out = amount_out / pool.gamma
        fee_amount = gross_out - amount_out
        skim = pool.protocol_fee_share * fee_amount
        skim_token = j
        reserves[i] += amount_in
        reserves[j] -= amount_out + skim
    if reserves[j] <= 0:
        raise PoolError("swap would drain the output reserve")
    return SwapResult(
        pool=replace(pool, reserves=reserves),
        amount_out=amount_out,
        fee_amount=fee_amount,
        skim_amount=skim,
        skim_token=skim_token,
    )


def execute_flows(pool: PoolState, flows: Sequence[float] | np.ndarray) -> FlowResult:
    """Apply a simultaneous multi-token trade.

    ``flows[i] > 0`` is paid into the pool by the trader, ``flows[i] < 0`` is
    paid out. Fees are charged on the paid-in legs (or the paid-out legs when
    ``fee_on_input`` is off). The trade must not lower the fee-adjusted
    invariant beyond rounding.
    """
    f = np.asarray(flows, dtype=float)
    if f.shape != pool.reserves.shape:
        raise PoolError("flow vector has the wrong shape")
    _require_positive_reserves(pool)
    r, g = pool.reserves, pool.gamma
    fee = pool.swap_fee_rate
    if pool.fee_on_input:
        adjusted = r + np.where(f > 0, g * f, f)
        fee_amounts = np.where(f > 0, fee * f, 0.0)
    else:
        adjusted = r + np.where(f > 0, f, f / g)
        fee_amounts = np.where(f < 0, -f / g * fee, 0.0)
    if np.any(adjusted <= 0):
        raise PoolError("trade would drain a reserve")
    log_k = float(np.dot(pool.weights, np.log(r)))
    if float(np.dot(pool.weights, np.log(adjusted))) < log_k - 1e-12:
        raise PoolError("trade violates the pool invariant")
    skim = pool.protocol_fee_share * fee_amounts
    if pool.fee_on_input:
        reserves = r + f - skim
    else:
        reserves = r + np.where(f < 0, f / g, f) + fee_amounts - skim
    return FlowResult(pool=replace(pool, reserves=reserves), flows=f.copy(), skim=skim)
