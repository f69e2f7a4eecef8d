"""Trade labelling shared by the simulator and the trace analyser.

A trade is *price driven* when, with the pool's weights frozen at a stale
reference and the reserves it actually faced, current prices alone would still
offer an arbitrage. Otherwise it is *incidental routing* when it extracted at
most a cent, and *weight driven* in every other case.
"""

from __future__ import annotations

import enum
from typing import Sequence

import numpy as np

from .arb import optimal_arb_multi
from .pool import PoolState

__all__ = [
    "TradeClass",
    "STALE_MODES",
    "window_start_index",
    "stale_weights",
    "classify",
]

INCIDENTAL_CUTOFF_USD = 0.01
OPPORTUNITY_DUST = 1e-9  # fraction of pool value
SEGMENT_TOL = 1e-10

STALE_MODES = ("last_trade", "window_start", "lag")


class TradeClass(str, enum.Enum):
    WEIGHT_DRIVEN = "WeightDriven"
    PRICE_DRIVEN = "PriceDriven"
    INCIDENTAL = "IncidentalRouting"

    def __str__(self) -> str:
        return self.value


def window_start_index(weights: Sequence[np.ndarray], idx: int) -> int:
    """Index whose weights open the linear segment that reaches ``idx``.

    Segments are runs of equal per-block weight increments; a run of zero
    increments (constant weights) is a segment too.
    """
    if idx <= 0:
        return 0
    step = np.asarray(weights[idx]) - np.asarray(weights[idx - 1])
    s = idx - 1
    while s > 0:
        prev = np.asarray(weights[s]) - np.asarray(weights[s - 1])
        if np.max(np.abs(prev - step)) > SEGMENT_TOL:
            break
        s -= 1
    return s


def stale_weights(
    weights: Sequence[np.ndarray],
    idx: int,
    last_trade_idx: int | None = None,
    mode: str = "last_trade",
    lag: int = 1,
) -> np.ndarray | None:
    """Weights the pool would have had without the recent updates.

    ``last_trade``: weights when the pool was last traded back into its band
    (falls back to the window start when there is no earlier trade).
    ``window_start``: weights at the start of the current linear segment.
    ``lag``: weights ``lag`` blocks earlier.
    Returns None when no reference exists.
    """
    if mode not in STALE_MODES:
        raise ValueError(f"unknown stale-weight mode {mode!r}")
    if idx <= 0:
        return None
    if mode == "lag":
        ref = idx - lag
        return np.asarray(weights[ref]) if ref >= 0 else None
    if mode == "last_trade" and last_trade_idx is not None and 0 <= last_trade_idx < idx:
        return np.asarray(weights[last_trade_idx])
    return np.asarray(weights[window_start_index(weights, idx)])


def classify(
    pre_trade_pool: PoolState,
    prices: np.ndarray,
    profit_usd: float,
    stale: np.ndarray | None,
    incidental_cutoff_usd: float = INCIDENTAL_CUTOFF_USD,
    dust: float = OPPORTUNITY_DUST,
) -> tuple[TradeClass, bool]:
    """Label one trade. Returns ``(label, missing_reference)``.

    Precedence is PriceDriven, then IncidentalRouting, then WeightDriven.
    """
    missing = stale is None
    if not missing:
        frozen = pre_trade_pool.with_weights(stale / np.sum(stale))
        opp = optimal_arb_multi(frozen, prices)
        value = float(np.dot(frozen.reserves, prices))
        if opp.theoretical_max_profit_usd > dust * value:
            return TradeClass.PRICE_DRIVEN, False
    if profit_usd <= incidental_cutoff_usd:
        return TradeClass.INCIDENTAL, missing
    return TradeClass.WEIGHT_DRIVEN, missing
