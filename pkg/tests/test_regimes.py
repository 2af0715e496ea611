import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from anomalyscan.exceptions import DegenerateInputError, DegenerateRegimeError, EmptyBucketError
from anomalyscan.panel import DailyBars, DailyBarSet, MonthKey, month_range
from anomalyscan.portfolio import StrategyReturnSeries, StrategySpec
from anomalyscan.regimes import (
    MedianSplit,
    RegimeSeries,
    amihud_illiquidity,
    macro_uncertainty,
    market_state,
    median_split,
    regime_from_values,
    split_performance,
    stock_month_illiquidity,
    volatility_regime,
)
from anomalyscan.synth import gen_garch_path
from anomalyscan.volmodels import GarchParams
from oracles import exact_mean, trailing_sum_state

START = MonthKey(1990, 1)


def bars(rows):
    """``{stock: [(date, ret, vol), ...]}`` -> DailyBarSet."""
    out = {}
    for stock, entries in rows.items():
        d, r, v = zip(*entries)
        out[stock] = DailyBars(np.array(d, dtype="datetime64[D]"), r, v)
    return DailyBarSet(out)


NAN = float("nan")

# Three stocks, January and February 2001, at least 3 usable days per stock-month.
#   A Jan: 0.01/10, 0.02/20, 0.03/40, (zero volume)   -> 0.00275 / 3 = 11/12000
#   A Feb: 0.02/5, (NaN return), 0.01/10, 0.04/8      -> 0.010 / 3   = 1/300
#   B Jan: 0.05/50, 0.06/30, 0.00/10                  -> 0.003 / 3   = 1/1000
#   B Feb: two usable days only                       -> excluded
#   C Jan: 0.1/100, 0.2/100, 0.3/100                  -> 2/1000
#   C Feb: 0.03/3, 0.06/6, 0.09/9                     -> 1/100
#   A Mar: a single day                               -> month absent
# AILLIQ Jan = (11/12000 + 12/12000 + 24/12000) / 3 = 47/36000
# AILLIQ Feb = (1/300 + 3/300) / 2 = 1/150
HAND_BARS = {
    "A": [("2001-01-02", 0.01, 10), ("2001-01-03", -0.02, 20), ("2001-01-04", 0.03, 40),
          ("2001-01-05", 0.05, 0), ("2001-02-01", 0.02, 5), ("2001-02-02", NAN, 10),
          ("2001-02-05", -0.01, 10), ("2001-02-06", 0.04, 8), ("2001-03-01", 0.01, 1)],
    "B": [("2001-01-02", 0.05, 50), ("2001-01-03", -0.06, 30), ("2001-01-04", 0.0, 10),
          ("2001-02-01", 0.01, 1), ("2001-02-02", 0.02, 2), ("2001-02-05", 0.02, 0)],
    "C": [("2001-01-02", 0.1, 100), ("2001-01-03", -0.2, 100), ("2001-01-04", 0.3, 100),
          ("2001-02-01", 0.03, 3), ("2001-02-02", -0.06, 6), ("2001-02-05", 0.09, 9)],
}


class TestAmihud:
    def test_single_term(self):
        res = amihud_illiquidity(bars({"S": [("2001-01-02", 0.01, 1e6)]}), min_days=1)
        assert res.raw_value[0] == pytest.approx(1e-8, rel=1e-15)

    def test_hand_fixture(self):
        res = amihud_illiquidity(bars(HAND_BARS), min_days=3)
        assert res.condition == "Illiquidity"
        assert res.months == (MonthKey(2001, 1), MonthKey(2001, 2))
        assert abs(res.raw_value[0] - 47 / 36000) < 1e-15
        assert abs(res.raw_value[1] - 1 / 150) < 1e-15
        assert list(res.dummy) == [0, 1]

    def test_hand_fixture_against_exact_arithmetic(self):
        per = stock_month_illiquidity(bars(HAND_BARS), min_days=3)
        jan = MonthKey(2001, 1)
        a_jan = exact_mean([0.01 / 10, 0.02 / 20, 0.03 / 40])
        assert abs(per[("A", jan)] - float(a_jan)) < 1e-15
        assert ("B", MonthKey(2001, 2)) not in per

    def test_zero_volume_days_excluded(self):
        rows = {"S": [("2001-01-02", 0.01, 100), ("2001-01-03", 0.5, 0)]}
        assert amihud_illiquidity(bars(rows), min_days=1).raw_value[0] == pytest.approx(1e-4)
        with pytest.raises(DegenerateInputError):
            amihud_illiquidity(bars(rows), min_days=2)

    def test_positive_on_generated_bars(self):
        from anomalyscan.synth import gen_daily_bars, stock_ids
        b = gen_daily_bars(stock_ids(5), month_range(START, START + 5), seed=1)
        res = amihud_illiquidity(b)
        assert len(res) == 6 and np.all(res.raw_value > 0)


class TestMarketState:
    def test_rising_index(self):
        res = market_state(np.full(50, 0.01), month_range(START, START + 49))
        assert np.all(res.dummy == 1) and len(res) == 14

    def test_zero_sum_is_up(self):
        x = np.tile([0.01, -0.01], 10)
        res = market_state(x, month_range(START, START + 19), lookback=2)
        assert np.all(res.raw_value == 0.0) and np.all(res.dummy == 1)

    def test_random_walk_oracle(self):
        rng = np.random.default_rng(3)
        levels = 1000 * np.exp(np.cumsum(rng.normal(0, 0.06, 301)))
        logret = np.diff(np.log(levels))
        months = month_range(START, START + 299)
        res = market_state(logret, months)
        oracle = trailing_sum_state(list(logret), 36)
        assert res.months == tuple(months[t] for t, _, _ in oracle)
        assert [int(d) for d in res.dummy] == [d for _, _, d in oracle]

    def test_too_short(self):
        with pytest.raises(DegenerateInputError):
            market_state(np.zeros(36), month_range(START, START + 35))

    def test_leading_nan_trimmed(self):
        x = np.r_[np.nan, np.full(40, 0.01)]
        res = market_state(x, month_range(START, START + 40))
        assert res.months[0] == START + 37


@pytest.fixture(scope="module")
def path():
    return gen_garch_path(GarchParams(0.005, 0.05, 1e-4, 0.85, 0.05, 0.1), 300, seed=4)


class TestGarchRegimes:
    def test_volatility_median_split(self, path):
        months = month_range(START, START + 299)
        res = volatility_regime(path.returns, months)
        raw = res.raw_value
        np.testing.assert_array_equal(res.dummy, (raw > np.median(raw)).astype(int))
        assert res.months == months[1:] and res.model.converged
        assert abs(int(res.dummy.sum()) - (len(res) - int(res.dummy.sum()))) <= 1

    def test_macro_uncertainty(self, path):
        levels = 100 * np.exp(np.r_[0.0, np.cumsum(path.returns)])
        months = month_range(START, START + 300)
        res = macro_uncertainty(levels, months)
        assert res.condition == "Uncertainty" and not res.model.spec.asymmetric
        assert res.months == months[2:]
        np.testing.assert_array_equal(res.dummy, median_split(res.raw_value))

    def test_constant_macro_index(self):
        with pytest.raises(DegenerateInputError):
            macro_uncertainty(np.full(100, 50.0), month_range(START, START + 99))

    def test_macro_too_short(self, path):
        with pytest.raises(DegenerateInputError):
            macro_uncertainty(100 + np.arange(60.0), month_range(START, START + 59))


class TestMedianSplit:
    @given(st.lists(st.integers(-10**6, 10**6), min_size=1, max_size=60, unique=True))
    def test_balance_without_repeated_values(self, values):
        x = np.array(values) / 7.0
        d = median_split(x)
        ties = int(np.sum(x == np.median(x)))
        assert abs(int(d.sum()) - int((1 - d).sum())) <= ties

    @given(st.lists(st.integers(-5, 5), min_size=1, max_size=60))
    def test_balance_with_ties(self, values):
        # all ties land in the low bucket, so the imbalance can reach 2 * ties - 1
        x = np.array(values, dtype=float)
        d = median_split(x)
        ties = int(np.sum(x == np.median(x)))
        assert abs(int(d.sum()) - int((1 - d).sum())) <= max(2 * ties - 1, 0)

    def test_tie_rule_can_exceed_tie_count(self):
        d = median_split([0.0, 1.0, 1.0])
        assert list(d) == [0, 0, 0]

    @given(st.lists(st.integers(-50, 50), min_size=1, max_size=60))
    def test_monotone_transform_invariance(self, values):
        x = np.array(values, dtype=float)
        np.testing.assert_array_equal(median_split(x), median_split(np.exp(x / 10)))
        np.testing.assert_array_equal(median_split(x), median_split(3 * x + 7))

    def test_ties_at_median_are_low(self):
        np.testing.assert_array_equal(median_split([1, 2, 2, 2, 3]), [0, 0, 0, 0, 1])

    def test_estimator(self):
        est = MedianSplit().fit([1.0, 2.0, 3.0, 4.0])
        assert est.median_ == 2.5
        np.testing.assert_array_equal(est.transform([2.5, 2.6, 0.0]), [0, 1, 0])


def planted_series(n=120):
    months = month_range(START, START + (n - 1))
    high = np.arange(n) % 3 == 0
    rng = np.random.default_rng(8)
    values = np.where(high, 0.02, -0.02) + rng.normal(0, 0.01, n)
    series = StrategyReturnSeries(StrategySpec(1, 1), months, values)
    regime = regime_from_values("Volatility", months, np.where(high, 2.0, 1.0))
    return series, regime


class TestSplitPerformance:
    def test_planted_signs(self):
        series, regime = planted_series()
        high, low = split_performance(series, regime)
        assert high.mean > 0 and low.mean < 0
        assert high.n_obs + low.n_obs == len(series)

    def test_all_high_leaves_empty_bucket(self):
        series, _ = planted_series(40)
        regime = RegimeSeries("State", series.months, np.ones(40), np.ones(40), rule="sign")
        with pytest.raises(EmptyBucketError, match="low"):
            split_performance(series, regime)

    def test_all_ties_degenerate(self):
        series, _ = planted_series(40)
        regime = regime_from_values("Volatility", series.months, np.full(40, 0.3))
        with pytest.raises(DegenerateRegimeError):
            split_performance(series, regime)

    def test_only_overlapping_months_used(self):
        series, regime = planted_series(120)
        cut = RegimeSeries("Volatility", regime.months[:60], regime.raw_value[:60],
                           regime.dummy[:60])
        high, low = split_performance(series, cut)
        assert high.n_obs + low.n_obs == 60
