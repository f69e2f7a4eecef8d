"""Optimal arbitrage against a geometric-mean pool at external prices.

The pairwise optimum has a closed form. Writing ``a = w_in / w_out`` and
``m_u`` for the pool's marginal price of the input token in the output token,
the profit-maximising post-trade (fee-adjusted) input reserve ``x`` satisfies

    x / R_in = (gamma * m_u / m_p) ** (1 / (1 + a))

which is the first-order condition "fee-adjusted post-trade marginal price
equals the external price". A trade exists only when ``gamma * m_u > m_p``.

For N > 2 tokens a greedy sequence of pairwise legs is compared against the
exact simultaneous-flow optimum, found by a one-dimensional root search on the
Lagrange multiplier of the invariant constraint.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .pool import (
    PoolError,
    PoolState,
    as_prices,
    execute_swap,
    pool_value,
    quote_swap,
    quoted_price,
)

__all__ = [
    "ArbTrade",
    "ArbOpportunity",
    "profit_of_trade",
    "band_gap_bp",
    "optimal_amount_in",
    "optimal_arb_two_token",
    "optimal_arb_multi",
    "simultaneous_flow_optimum",
    "greedy_legs",
    "boundary_slip",
    "undertrade_profile",
    "naive_amount_in",
]

# relative to pool value; greedy legs below this are not worth another pass
GREEDY_EPS = 1e-12
MAX_GREEDY_LEGS = 64
ROOT_XTOL = 1e-12
ROOT_MAXITER = 200


@dataclass(frozen=True)
class ArbTrade:
    token_in: int
    token_out: int
    amount_in: float
    amount_out: float
    profit_usd: float
    post_trade_gap_bp: float = math.nan


@dataclass(frozen=True)
class ArbOpportunity:
    exists: bool
    best_trade: ArbTrade | None
    theoretical_max_profit_usd: float
    legs: tuple[ArbTrade, ...] = ()
    greedy_profit_usd: float = 0.0
    simultaneous_profit_usd: float = 0.0
    flows: np.ndarray | None = field(default=None, repr=False)


def profit_of_trade(
    pool: PoolState, prices: Sequence[float] | np.ndarray, i: int, j: int, amount_in: float
) -> float:
    """USD value received minus value paid for swapping ``amount_in`` of ``i`` into ``j``."""
    p = as_prices(prices, pool.n_tokens)
    if amount_in == 0:
        return 0.0
    out = quote_swap(pool, i, j, amount_in)
    return float(p[j] * out - p[i] * amount_in)


def band_gap_bp(pool: PoolState, prices: Sequence[float] | np.ndarray, i: int, j: int) -> float:
    """Log distance (bp) from the market price to the nearest band edge.

    Positive inside the band, negative outside.
    """
    p = as_prices(prices, pool.n_tokens)
    m_u = quoted_price(pool, i, j)
    log_mp = math.log(p[i] / p[j])
    log_g = math.log(pool.gamma)
    lower = log_mp - (log_g + math.log(m_u))
    upper = (math.log(m_u) - log_g) - log_mp
    return 1e4 * min(lower, upper)


def optimal_amount_in(
    pool: PoolState, prices: Sequence[float] | np.ndarray, i: int, j: int
) -> float:
    """Profit-maximising input for ``i -> j``; 0 when that direction is unprofitable."""
    p = as_prices(prices, pool.n_tokens)
    m_u = quoted_price(pool, i, j)
    g = pool.gamma
    log_edge = math.log(g * m_u) - math.log(p[i] / p[j])
    if log_edge <= 0:
        return 0.0
    a = pool.weights[i] / pool.weights[j]
    growth = math.expm1(log_edge / (1.0 + a))
    r_in = pool.reserves[i]
    if pool.fee_on_input:
        return float(r_in * growth / g)
    return float(r_in * growth)


def _trade(pool: PoolState, p: np.ndarray, i: int, j: int, amount_in: float) -> ArbTrade:
    res = execute_swap(pool, i, j, amount_in)
    return ArbTrade(
        token_in=i,
        token_out=j,
        amount_in=amount_in,
        amount_out=res.amount_out,
        profit_usd=float(p[j] * res.amount_out - p[i] * amount_in),
        post_trade_gap_bp=band_gap_bp(res.pool, p, i, j),
    )


def optimal_arb_two_token(
    pool: PoolState, prices: Sequence[float] | np.ndarray, i: int, j: int
) -> ArbTrade | None:
    """Best single swap between tokens ``i`` and ``j`` (either direction), or None."""
    p = as_prices(prices, pool.n_tokens)
    if np.any(pool.reserves <= 0):
        raise PoolError("degenerate pool: zero reserve")
    for src, dst in ((i, j), (j, i)):
        amount = optimal_amount_in(pool, p, src, dst)
        if amount > 0:
            trade = _trade(pool, p, src, dst, amount)
            if trade.profit_usd > 0:
                return trade
    return None


def greedy_legs(
    pool: PoolState, prices: Sequence[float] | np.ndarray
) -> tuple[list[ArbTrade], PoolState]:
    """Repeatedly take the most profitable pairwise arb until none is left.

    Ties go to the lowest ``(i, j)`` pair. Returns the legs and the final pool.
    """
    p = as_prices(prices, pool.n_tokens)
    eps = GREEDY_EPS * pool_value(pool, p)
    legs: list[ArbTrade] = []
    state = pool
    for _ in range(MAX_GREEDY_LEGS):
        best: ArbTrade | None = None
        for i, j in itertools.combinations(range(pool.n_tokens), 2):
            t = optimal_arb_two_token(state, p, i, j)
            if t is not None and (best is None or t.profit_usd > best.profit_usd):
                best = t
        if best is None or best.profit_usd <= eps:
            break
        legs.append(best)
        state = execute_swap(state, best.token_in, best.token_out, best.amount_in).pool
    return legs, state


def simultaneous_flow_optimum(
    pool: PoolState, prices: Sequence[float] | np.ndarray
) -> tuple[float, np.ndarray]:
    """Exact optimum over simultaneous per-token flows against the current invariant.

    Returns ``(profit_usd, net_flows)`` where ``net_flows[i] > 0`` means the
    trader pays token ``i`` into the pool. Every token is either paid in (fee
    charged), taken out, or untouched.
    """
    p = as_prices(prices, pool.n_tokens)
    r, w, g = pool.reserves, pool.weights, pool.gamma
    if np.any(r <= 0):
        raise PoolError("degenerate pool: zero reserve")
    log_k = float(np.dot(w, np.log(r)))
    # post-trade (fee-adjusted) reserve is R clipped to [lo*s, hi*s], s = lambda*w/p
    lo, hi = (g, 1.0) if pool.fee_on_input else (1.0, 1.0 / g)
    base = np.log(w / p)

    def post(log_lam: float) -> np.ndarray:
        s = np.exp(log_lam + base)
        return np.clip(r, lo * s, hi * s)

    def gap(log_lam: float) -> float:
        return float(np.dot(w, np.log(post(log_lam)))) - log_k

    a = log_k - float(np.dot(w, base)) - math.log(hi)
    b = log_k - float(np.dot(w, base)) - math.log(lo)
    if b - a < 1e-300 or gap(a) >= 0:
        x = post(a)
    elif gap(b) <= 0:
        x = post(b)
    else:
        log_lam = brentq(gap, a, b, xtol=ROOT_XTOL, maxiter=ROOT_MAXITER)
        x = post(log_lam)
    out_idx = np.flatnonzero(x < r)
    if out_idx.size == 0 or not np.any(x > r):
        return 0.0, np.zeros_like(r)
    # close the invariant exactly on the largest outflow so profit is feasible
    k = out_idx[np.argmax(p[out_idx] * (r[out_idx] - x[out_idx]))]
    rest = float(np.dot(w, np.log(x))) - w[k] * math.log(x[k])
    x[k] = math.exp((log_k - rest) / w[k])
    in_mask = x > r
    if pool.fee_on_input:
        flows = np.where(in_mask, (x - r) / g, x - r)
        paid = np.where(in_mask, flows, 0.0)
        received = np.where(in_mask, 0.0, -flows)
    else:
        flows = np.where(in_mask, x - r, g * (x - r))
        paid = np.where(in_mask, flows, 0.0)
        received = np.where(in_mask, 0.0, -flows)
    profit = float(np.dot(p, received) - np.dot(p, paid))
    return max(profit, 0.0), flows


def optimal_arb_multi(pool: PoolState, prices: Sequence[float] | np.ndarray) -> ArbOpportunity:
    p = as_prices(prices, pool.n_tokens)
    legs, _ = greedy_legs(pool, p)
    greedy = float(sum(t.profit_usd for t in legs))
    simultaneous, flows = simultaneous_flow_optimum(pool, p)
    best = max(greedy, simultaneous)
    return ArbOpportunity(
        exists=best > 0,
        best_trade=legs[0] if legs else None,
        theoretical_max_profit_usd=best,
        legs=tuple(legs),
        greedy_profit_usd=greedy,
        simultaneous_profit_usd=simultaneous,
        flows=flows,
    )


def boundary_slip(
    pool: PoolState, prices: Sequence[float] | np.ndarray, i: int, j: int
) -> tuple[float, float]:
    """(bp between optimal post-trade price and band edge, trade notional / TVL)."""
    p = as_prices(prices, pool.n_tokens)
    trade = optimal_arb_two_token(pool, p, i, j)
    if trade is None:
        raise PoolError(f"no arbitrage opportunity on pair ({i}, {j})")
    size = p[trade.token_in] * trade.amount_in / pool_value(pool, p)
    return trade.post_trade_gap_bp, float(size)


def undertrade_profile(
    pool: PoolState,
    prices: Sequence[float] | np.ndarray,
    i: int,
    j: int,
    fractions: Sequence[float],
) -> list[tuple[float, float]]:
    p = as_prices(prices, pool.n_tokens)
    trade = optimal_arb_two_token(pool, p, i, j)
    if trade is None:
        raise PoolError(f"no arbitrage opportunity on pair ({i}, {j})")
    out = []
    for f in fractions:
        if not 0 < f <= 1:
            raise ValueError("fractions must lie in (0, 1]")
        prof = profit_of_trade(pool, p, trade.token_in, trade.token_out, f * trade.amount_in)
        out.append((float(f), prof / trade.profit_usd))
    return out


def naive_amount_in(
    pool: PoolState, prices: Sequence[float] | np.ndarray, i: int, j: int
) -> float:
    """Input that moves the post-trade quoted price of ``i -> j`` onto the market price."""
    p = as_prices(prices, pool.n_tokens)
    target = math.log(p[i] / p[j])
    if math.log(quoted_price(pool, i, j)) <= target:
        return 0.0

    def resid(amount: float) -> float:
        after = execute_swap(pool, i, j, amount).pool if amount > 0 else pool
        return math.log(quoted_price(after, i, j)) - target

    hi = pool.reserves[i] * 1e-6
    while resid(hi) > 0:
        hi *= 2.0
    return float(brentq(resid, 0.0, hi, xtol=1e-15))
