"""Cheaper gas means more, smaller arbitrage trades.

Two simulations share one price path and differ only in the standalone
arbitrageur's profitability threshold. With diffusive prices the opportunity
grows roughly linearly between trades, so cutting the threshold to a quarter
gives about four times the trades at about a quarter of the profit each.

    python3 demos/auction_compression.py
"""

import numpy as np

from tfmm_lab import GasModel, GeometricBrownian, PoolState, SimConfig, StandaloneArb, WeightTrajectory, run


def gas_for(threshold_usd):
    # threshold = base_fee * gas_units * eth_price * markup / 1e9
    return GasModel(base_fee_gwei=threshold_usd * 1e9 / (450_000 * 3000.0 * 1.5))


pool = PoolState(np.array([150_000.0, 150_000.0]), np.array([0.5, 0.5]), swap_fee_rate=0.0)
for threshold_usd in (2.0, 0.5):
    n_trades = profit = 0.0
    for seed in range(10):
        prices = GeometricBrownian((1.0, 1.0), vol=[1.5, 0.0], seed=seed)
        cfg = SimConfig(
            pool, WeightTrajectory(np.array([0.5, 0.5])), prices,
            agents=(StandaloneArb(gas_for(threshold_usd)),), n_blocks=600,
        )
        strikes = run(cfg).strikes
        n_trades += len(strikes)
        profit += sum(t.profit_usd for t in strikes)
    print(
        f"threshold ${threshold_usd:.2f}: {n_trades / 10:.1f} trades per 600 blocks, "
        f"${profit / n_trades:.3f} per trade"
    )
