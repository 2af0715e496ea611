"""Market-condition series, their high/low dummies, and regime-split performance.

Four conditions are supported:

State        trailing 36-month sum of index log returns; dummy 1 when >= 0
Volatility   GJR-GARCH conditional variance of index log returns; median split
Illiquidity  market-wide Amihud ratio from daily bars; median split
Uncertainty  GARCH conditional variance of macro index log returns; median split

Median splits use the full-sample median: values strictly above it get 1,
values equal to it get 0.
"""
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_int
from .econometrics import MeanTestResult, nw_mean_test
from .exceptions import (
    DataValidationError,
    DegenerateInputError,
    DegenerateRegimeError,
    EmptyBucketError,
)
from .panel import DailyBarSet, MonthKey
from .volmodels import GarchFit, GarchSpec, fit_garch

CONDITIONS = ("State", "Volatility", "Illiquidity", "Uncertainty")
STATE_LOOKBACK = 36
MIN_DAYS = 10


@dataclass(frozen=True, eq=False)
class RegimeSeries:
    condition: str
    months: tuple
    raw_value: np.ndarray
    dummy: np.ndarray
    rule: str = "median"  # or "sign"
    model: Optional[GarchFit] = None

    def __post_init__(self):
        if self.condition not in CONDITIONS:
            raise DataValidationError(f"unknown condition {self.condition!r}")
        raw = np.array(self.raw_value, dtype=float)
        dummy = np.array(self.dummy, dtype=np.int8)
        if not (raw.shape == dummy.shape == (len(self.months),)):
            raise DataValidationError("months, raw values and dummies differ in length")
        raw.setflags(write=False)
        dummy.setflags(write=False)
        object.__setattr__(self, "months", tuple(self.months))
        object.__setattr__(self, "raw_value", raw)
        object.__setattr__(self, "dummy", dummy)

    def lookup(self) -> dict:
        return dict(zip(self.months, self.dummy.tolist()))

    @property
    def is_degenerate(self) -> bool:
        return self.rule == "median" and self.raw_value.size > 0 and np.ptp(self.raw_value) == 0

    def __len__(self):
        return len(self.months)


def median_split(values) -> np.ndarray:
    """1 where a value is strictly above the sample median, else 0."""
    values = np.asarray(values, dtype=float)
    return (values > np.median(values)).astype(np.int8)


class MedianSplit(TransformerMixin, BaseEstimator):
    """Learn a median on ``fit`` and map values strictly above it to 1."""

    def fit(self, X, y=None):
        self.median_ = float(np.median(np.asarray(X, dtype=float)))
        return self

    def transform(self, X):
        return (np.asarray(X, dtype=float) > self.median_).astype(np.int8)


def regime_from_values(condition, months, raw_value, model=None) -> RegimeSeries:
    raw = np.asarray(raw_value, dtype=float)
    if raw.size == 0:
        raise DegenerateInputError(f"{condition}: no values")
    return RegimeSeries(condition, tuple(months), raw, median_split(raw), "median", model)


def _clean_series(values, months, name):
    """Drop leading/trailing NaNs; reject interior gaps."""
    arr = np.asarray(values, dtype=float)
    months = tuple(months)
    if arr.shape != (len(months),):
        raise DataValidationError(f"{name}: values and months differ in length")
    ok = np.flatnonzero(~np.isnan(arr))
    if ok.size == 0:
        raise DegenerateInputError(f"{name}: no observations")
    lo, hi = ok[0], ok[-1] + 1
    if np.isnan(arr[lo:hi]).any():
        raise DataValidationError(f"{name}: missing values inside the sample")
    return arr[lo:hi], months[lo:hi]


def market_state(index_logret, months, lookback: int = STATE_LOOKBACK) -> RegimeSeries:
    """Sign of the index log return over the previous ``lookback`` months.

    The value at month t sums months ``t-lookback .. t-1``; the first
    ``lookback`` months have no value. A sum of exactly zero counts as up.
    """
    check_int(lookback, "lookback", 1)
    values, months = _clean_series(index_logret, months, "index log return")
    if values.size <= lookback:
        raise DegenerateInputError(
            f"index series has {values.size} months, need more than {lookback}")
    raw = np.array([math.fsum(values[t - lookback:t]) for t in range(lookback, values.size)])
    return RegimeSeries("State", months[lookback:], raw, (raw >= 0).astype(np.int8), "sign")


def volatility_regime(index_logret, months) -> RegimeSeries:
    """Median split of the AR(1)-GJR-GARCH(1,1) conditional variance."""
    values, months = _clean_series(index_logret, months, "index log return")
    fit = fit_garch(values, GarchSpec(asymmetric=True), months=months)
    return regime_from_values("Volatility", fit.months, fit.cond_variance, model=fit)


def macro_uncertainty(macro_index, months) -> RegimeSeries:
    """Median split of the AR(1)-GARCH(1,1) conditional variance of macro log returns."""
    levels, months = _clean_series(macro_index, months, "macro index")
    if levels.size < 61:
        raise DegenerateInputError(f"macro index has {levels.size} levels, need at least 61")
    if np.any(levels <= 0):
        raise DataValidationError("macro index levels must be positive")
    logret = np.diff(np.log(levels))
    fit = fit_garch(logret, GarchSpec(asymmetric=False), months=months[1:])
    return regime_from_values("Uncertainty", fit.months, fit.cond_variance, model=fit)


def stock_month_illiquidity(bars: DailyBarSet, min_days: int = MIN_DAYS) -> dict:
    """``{(stock, MonthKey): ILLIQ}`` for stock-months with at least ``min_days`` usable days.

    A day is usable when both its return and volume are present and the
    volume is strictly positive.
    """
    check_int(min_days, "min_days", 1)
    out = {}
    for stock, b in bars.bars.items():
        usable = ~np.isnan(b.returns) & ~np.isnan(b.volume) & (b.volume > 0)
        ratio = np.abs(b.returns[usable]) / b.volume[usable]
        ym = b.dates[usable].astype("datetime64[M]").astype(np.int64)
        for key in np.unique(ym):
            sel = ratio[ym == key]
            if sel.size >= min_days:
                out[(stock, MonthKey.from_ordinal(int(key) + 1970 * 12))] = math.fsum(sel) / sel.size
    return out


def amihud_illiquidity(bars: DailyBarSet, min_days: int = MIN_DAYS) -> RegimeSeries:
    """Market-wide Amihud illiquidity: cross-sectional mean of per-stock monthly ILLIQ.

    Months without any qualifying stock are absent from the result.
    """
    per_month = defaultdict(list)
    for (stock, month), value in stock_month_illiquidity(bars, min_days).items():
        per_month[month].append(value)
    if not per_month:
        raise DegenerateInputError("no stock-month has enough usable trading days")
    months = sorted(per_month)
    raw = [math.fsum(per_month[m]) / len(per_month[m]) for m in months]
    return regime_from_values("Illiquidity", months, raw)


def split_performance(series, regime: RegimeSeries, lag: Optional[int] = None):
    """HAC mean tests of the strategy returns in high (dummy 1) and low (dummy 0) months.

    Observations are bucketed by the dummy at their formation month; those
    falling outside the regime's months are ignored.

    Returns
    -------
    (high, low) : tuple of MeanTestResult
    """
    if regime.is_degenerate:
        raise DegenerateRegimeError(f"{regime.condition}: all raw values are tied")
    lookup = regime.lookup()
    high, low = [], []
    for month, value in zip(series.months, series.returns):
        d = lookup.get(month)
        if d == 1:
            high.append(value)
        elif d == 0:
            low.append(value)
    for name, bucket in (("high", high), ("low", low)):
        if len(bucket) < 2:
            raise EmptyBucketError(
                f"{regime.condition}: {name} bucket has {len(bucket)} observations, need 2")
    return nw_mean_test(high, lag), nw_mean_test(low, lag)


@dataclass(frozen=True)
class SplitRow:
    j: int
    k: int
    condition: str
    raw: MeanTestResult
    high: MeanTestResult
    low: MeanTestResult
