"""How much does splitting a weight change into N steps save?

A zero-fee two-token pool moves its weights from 50/50 to 52/48. A zero-threshold
arbitrageur trades back to market prices after every step. Total extraction
falls roughly as 1/N.

    python3 demos/interpolation_cost.py
"""

import numpy as np

from tfmm_lab import ConstantPrices, GasModel, PoolState, SimConfig, StandaloneArb, run
from tfmm_lab.schedule import single_step_trajectory, split_cost_ratio

# a $2M pool at unit prices
pool = PoolState(np.array([1e6, 1e6]), np.array([0.5, 0.5]), swap_fee_rate=0.0, protocol_fee_share=0.0)
arb = StandaloneArb(GasModel(base_fee_gwei=0.0))

print(f"{'N':>5} {'extraction $':>14} {'x N':>10} {'analytic ratio':>15}")
for n in [1, 2, 4, 8, 16, 32, 64, 128, 256]:
    traj = single_step_trajectory([0.5, 0.5], [0.52, 0.48], n, activation_block=1)
    trace = run(SimConfig(pool, traj, ConstantPrices((1.0, 1.0)), agents=(arb,), n_blocks=n + 3))
    total = sum(t.profit_usd for t in trace.trades)
    print(f"{n:>5} {total:>14.4f} {total * n:>10.4f} {split_cost_ratio(0.02, n):>15.5f}")

# The "x N" column stays flat: each step pays (dw/N)^2 and there are N of them.
