"""Simulation and trace analysis of arbitrage-driven rebalancing in dynamic-weight AMM pools."""

from .arb import (
    ArbOpportunity,
    ArbTrade,
    band_gap_bp,
    boundary_slip,
    greedy_legs,
    naive_amount_in,
    optimal_amount_in,
    optimal_arb_multi,
    optimal_arb_two_token,
    profit_of_trade,
    simultaneous_flow_optimum,
    undertrade_profile,
)
from .bench import (
    BenchmarkParams,
    BenchmarkSeries,
    benchmark,
    benchmark_records,
    lvr_series,
    relative_performance,
    rvr_series,
)
from .classify import TradeClass, classify, stale_weights
from .pool import (
    FlowResult,
    NoArbBand,
    PoolError,
    PoolState,
    SwapResult,
    allocation_drift,
    execute_flows,
    execute_swap,
    invariant_k,
    no_arb_band,
    pool_value,
    quote_swap,
    quoted_price,
    value_allocation,
)
from .schedule import (
    WeightTrajectory,
    WeightUpdate,
    single_step_trajectory,
    split_cost_ratio,
    weights_at,
)
from .sim import (
    ConfigError,
    ConstantPrices,
    GasModel,
    GeometricBrownian,
    IncidentalRouter,
    ReplayPrices,
    SimConfig,
    SimTrace,
    StandaloneArb,
    run,
    threshold,
    threshold_usd,
)
from .trace import (
    AnalysisConfig,
    BlockRecord,
    TraceError,
    TradeRecord,
    WindowReport,
    classify_trade,
    detect_trades,
    efficiency_ratio,
    load_trace,
    mean_trade_spacing,
    window_report,
    write_trace,
)

__version__ = "0.1.0"
