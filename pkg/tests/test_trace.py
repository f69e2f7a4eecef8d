import json
from pathlib import Path

import numpy as np
import pytest
from scenarios import PRICES, two_token_pool, weight_drift_run

from tfmm_lab.arb import optimal_arb_two_token
from tfmm_lab.classify import TradeClass
from tfmm_lab.pool import PoolState, execute_swap
from tfmm_lab.trace import (
    AnalysisConfig,
    BlockRecord,
    TraceError,
    detect_trades,
    efficiency_ratio,
    load_trace,
    mean_trade_spacing,
    window_report,
    write_report,
    write_trace,
)

DATA = Path(__file__).parent / "data"


def record(block, reserves, weights=(0.5, 0.5), prices=PRICES, base_fee=0.55, **kw):
    return BlockRecord(
        block=block,
        timestamp=12.0 * block,
        reserves=np.asarray(reserves, dtype=float),
        weights=np.asarray(weights, dtype=float),
        prices_usd=np.asarray(prices, dtype=float),
        base_fee_gwei=base_fee,
        eth_price_usd=3000.0,
        **kw,
    )


def static_trace(n_blocks, swap_blocks, notional=50.0):
    """Constant prices and weights; a small swap lands at each of ``swap_blocks``."""
    pool = two_token_pool()
    recs = []
    order = {b: k for k, b in enumerate(sorted(swap_blocks))}
    for b in range(n_blocks):
        if b in order:
            i, j = (0, 1) if order[b] % 2 else (1, 0)
            pool = execute_swap(pool, i, j, notional / PRICES[i]).pool
        recs.append(record(b, pool.reserves))
    return recs


class TestLoad:
    def test_empty_file(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("")
        assert load_trace(p) == []

    def test_round_trip_csv_and_json(self, tmp_path):
        recs = weight_drift_run(0.3, n_blocks=80).records()
        for fmt in ("csv", "json"):
            path = tmp_path / f"t.{fmt}"
            write_trace(recs, path)
            assert load_trace(path) == recs

    def test_optional_columns_round_trip(self, tmp_path):
        recs = [
            record(0, [100.0, 300_000.0], gas_used=150_000.0, priority_fee_gwei=0.1, tip_usd=0.02),
            record(1, [100.0, 300_000.0]),
        ]
        path = tmp_path / "t.csv"
        write_trace(recs, path)
        assert "gas_used,priority_fee_gwei,tip_usd" in path.read_text().splitlines()[0]
        assert load_trace(path) == recs

    def test_weight_sum_rejected_with_line(self, tmp_path):
        path = tmp_path / "t.csv"
        write_trace([record(0, [1.0, 1.0]), record(1, [1.0, 1.0])], path)
        lines = path.read_text().splitlines()
        lines[2] = lines[2].replace("0.5,0.5", "0.5,0.5000001", 1)
        path.write_text("\n".join(lines))
        with pytest.raises(TraceError, match=r"line 3: weights sum"):
            load_trace(path)

    def test_weight_sum_within_tolerance_accepted(self, tmp_path):
        path = tmp_path / "t.csv"
        write_trace([record(0, [1.0, 1.0])], path)
        text = path.read_text().replace("0.5,0.5", "0.5,0.5000000001", 1)
        path.write_text(text)
        assert len(load_trace(path)) == 1

    @pytest.mark.parametrize(
        "mutate,msg",
        [
            (lambda ls: ls.__setitem__(0, ls[0].replace("block", "blk")), "line 1"),
            (lambda ls: ls.__setitem__(2, ls[2] + ",1"), "line 3: expected"),
            (lambda ls: ls.__setitem__(2, ls[2].replace("1.0", "abc", 1)), "line 3"),
            (lambda ls: ls.__setitem__(2, ls[2].replace("1.0", "nan", 1)), "line 3"),
            (lambda ls: ls.__setitem__(2, "0" + ls[2][1:]), "line 3: block 0 does not follow"),
        ],
    )
    def test_malformed_rows(self, tmp_path, mutate, msg):
        path = tmp_path / "t.csv"
        write_trace([record(0, [1.0, 1.0]), record(1, [1.0, 1.0])], path)
        lines = path.read_text().splitlines()
        mutate(lines)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(TraceError, match=msg):
            load_trace(path)

    def test_json_errors(self, tmp_path):
        path = tmp_path / "t.json"
        path.write_text('{"block": 1}')
        with pytest.raises(TraceError):
            load_trace(path)
        path.write_text("[{")
        with pytest.raises(TraceError, match="line 1"):
            load_trace(path)
        write_trace([record(0, [1.0, 1.0])], path)
        rows = json.loads(path.read_text())
        rows[0]["extra"] = 1
        path.write_text(json.dumps(rows))
        with pytest.raises(TraceError, match="unknown keys"):
            load_trace(path)

    def test_unknown_format(self, tmp_path):
        path = tmp_path / "t.parquet"
        path.write_text("x")
        with pytest.raises(TraceError):
            load_trace(path)


class TestDetect:
    def test_no_changes(self):
        recs = [record(b, [100.0, 300_000.0]) for b in range(10)]
        assert detect_trades(recs) == []

    def test_dust_ignored(self):
        recs = [record(0, [100.0, 300_000.0]), record(1, [100.0 * (1 + 5e-10), 300_000.0])]
        assert detect_trades(recs) == []
        recs[1] = record(1, [100.0 * (1 + 5e-9), 300_000.0])
        assert len(detect_trades(recs)) == 1

    def test_injected_optimal_arb(self):
        pool = two_token_pool()
        p = PRICES * np.array([1.02, 1.0])
        t = optimal_arb_two_token(pool, p, 0, 1)
        after = execute_swap(pool, t.token_in, t.token_out, t.amount_in).pool
        recs = [record(0, pool.reserves, prices=p), record(1, after.reserves, prices=p)]
        trades = detect_trades(recs)
        assert len(trades) == 1
        assert trades[0].empirical_profit_usd == pytest.approx(t.profit_usd, rel=1e-9)
        # skim-adjusted inflow equals the amount the trader paid in
        assert trades[0].balance_deltas[t.token_in] == pytest.approx(t.amount_in, rel=1e-12)
        assert trades[0].tokens_in == (t.token_in,)

    def test_output_fee_skim_adjustment(self):
        pool = PoolState(two_token_pool().reserves, [0.5, 0.5], fee_on_input=False)
        res = execute_swap(pool, 1, 0, 3000.0)
        recs = [record(0, pool.reserves), record(1, res.pool.reserves)]
        cfg = AnalysisConfig(fee_on_input=False)
        trade = detect_trades(recs, cfg)[0]
        assert -trade.balance_deltas[0] == pytest.approx(res.amount_out, rel=1e-12)

    def test_simulator_round_trip(self, tmp_path):
        sim = weight_drift_run(0.4, n_blocks=300)
        path = tmp_path / "t.csv"
        write_trace(sim.records(), path)
        trades = detect_trades(load_trace(path))
        assert [t.block for t in trades] == [t.block for t in sim.trades]
        for a, b in zip(trades, sim.trades):
            assert a.empirical_profit_usd == pytest.approx(b.profit_usd, rel=1e-9)
            assert a.classification is b.label

    def test_constant_price_weight_run_all_weight_driven(self):
        sim = weight_drift_run(0.4, n_blocks=300)
        trades = detect_trades(sim.records())
        assert trades and all(t.classification is TradeClass.WEIGHT_DRIVEN for t in trades)

    def test_markout_option(self):
        recs = static_trace(5, {2})
        recs[3] = record(3, recs[3].reserves, prices=PRICES * np.array([1.1, 1.0]))
        same = detect_trades(recs)[0]
        later = detect_trades(recs, AnalysisConfig(markout_blocks=1))[0]
        assert later.empirical_profit_usd != same.empirical_profit_usd


class TestReport:
    def test_efficiency_arithmetic(self):
        assert efficiency_ratio(51.55, 58.19) == pytest.approx(0.886, abs=1e-3)
        assert efficiency_ratio(1.0, 0.0) == 0.0

    def test_spacing_twenty_trades(self):
        assert mean_trade_spacing(606, 20) == pytest.approx(30.3)
        recs = static_trace(606, set(range(10, 606, 30)))
        trades = detect_trades(recs)
        assert len(trades) == 20
        rep = window_report(recs, trades)
        assert rep.mean_blocks_between_trades == pytest.approx(30.3)
        assert rep.label_counts["IncidentalRouting"] == 20

    def test_empty_trade_list(self):
        recs = [record(b, [100.0, 300_000.0]) for b in range(5)]
        rep = window_report(recs, [])
        assert rep.n_trades == 0 and rep.efficiency_ratio == 0.0
        assert "no trades in window" in rep.flags
        assert rep.summary()["mean_blocks_between_trades"] is None

    def test_empty_trace(self):
        rep = window_report([], [])
        assert rep.n_blocks == 0 and rep.max_allocation_drift == 0.0

    def test_all_above_threshold(self):
        sim = weight_drift_run(0.8, n_blocks=300)
        recs = sim.records()
        rep = window_report(recs, detect_trades(recs))
        assert rep.n_trades > 3
        assert rep.fraction_below_threshold == 0.0

    def test_incidental_trades_below_threshold(self):
        recs = static_trace(100, {10, 20, 30})
        rep = window_report(recs, detect_trades(recs))
        assert rep.fraction_below_threshold == 1.0
        assert "negative-profit trades present" in rep.flags

    def test_zero_threshold_efficiency(self):
        sim = weight_drift_run(0.0, n_blocks=200)
        recs = sim.records()
        rep = window_report(recs, detect_trades(recs))
        assert rep.efficiency_ratio == pytest.approx(1.0, abs=1e-6)
        assert rep.efficiency_ratio <= 1.05

    def test_cumulative_monotone_without_negative_trades(self):
        sim = weight_drift_run(0.3, n_blocks=200)
        recs = sim.records()
        rep = window_report(recs, detect_trades(recs))
        assert np.all(np.diff(rep.cumulative_empirical_usd) >= 0)
        assert len(rep.cumulative_empirical_usd) == len(recs)

    def test_price_driven_excluded_by_default(self):
        from scenarios import composite_run

        sim, _ = composite_run(n_weight=5, n_price=4, n_incidental=3)
        recs = sim.records()
        trades = detect_trades(recs)
        default = window_report(recs, trades)
        incl = window_report(recs, trades, AnalysisConfig(include_price_driven=True))
        assert default.n_excluded == 4
        assert incl.n_trades == default.n_trades + 4

    def test_write_report(self, tmp_path):
        recs = static_trace(40, {5, 15})
        trades = detect_trades(recs)
        write_report(tmp_path, recs, trades, window_report(recs, trades))
        summary = json.loads((tmp_path / "report.json").read_text())
        assert summary["n_trades"] == 2
        header = (tmp_path / "blocks.csv").read_text().splitlines()[0]
        for col in ("allocation_drift", "opportunity_usd", "threshold_usd", "weight_0", "cum_empirical_usd"):
            assert col in header


def test_golden_fixture_is_consistent():
    recs = load_trace(DATA / "fixture_trace.csv")
    assert len(recs) == 150
    summary = json.loads((DATA / "golden" / "report.json").read_text())
    rep = window_report(recs, detect_trades(recs))
    assert rep.summary() == summary
