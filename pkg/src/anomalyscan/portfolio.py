"""J-K winner/loser decile portfolios and their buy-and-hold long-short returns.

Indexing for a formation month ``m`` (row index in the panel):

* estimation window: rows ``m-J .. m-1``
* skipped months:    rows ``m .. m+skip-1``
* holding months:    rows ``m+skip .. m+skip+K-1``

A stock is eligible at ``m`` when it has a return in every estimation and
every holding month. Stocks are ranked by their mean estimation-window return;
ties go to the canonical (lexicographic) stock order, so among equal scores the
lower identifier sorts first.
"""
from dataclasses import dataclass
from typing import FrozenSet

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_int, check_panel
from .exceptions import DataValidationError, EligibilityError, TooFewStocksError
from .panel import MonthKey, MonthlyPanel

SIDES = ("CSCON", "CSMOM")


@dataclass(frozen=True)
class StrategySpec:
    j: int
    k: int
    skip: int = 1
    side: str = "CSCON"
    decile_count: int = 10

    def __post_init__(self):
        check_int(self.j, "J", 1)
        check_int(self.k, "K", 1)
        check_int(self.skip, "skip", 0)
        check_int(self.decile_count, "decile_count", 2)
        if self.side not in SIDES:
            raise DataValidationError(f"side must be one of {SIDES}, got {self.side!r}")

    @property
    def span(self) -> int:
        """Months needed for a single formation."""
        return self.j + self.skip + self.k

    def with_side(self, side: str) -> "StrategySpec":
        return StrategySpec(self.j, self.k, self.skip, side, self.decile_count)


@dataclass(frozen=True)
class FormationResult:
    formation_month: MonthKey
    winner: FrozenSet[str]
    loser: FrozenSet[str]
    eligible_count: int


@dataclass(frozen=True, eq=False)
class StrategyReturnSeries:
    """K-month buy-and-hold long-short returns keyed by formation month."""

    spec: StrategySpec
    months: tuple
    returns: np.ndarray

    def __post_init__(self):
        arr = np.array(self.returns, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "months", tuple(self.months))
        object.__setattr__(self, "returns", arr)
        if arr.shape != (len(self.months),):
            raise DataValidationError("months and returns differ in length")

    @property
    def observations(self) -> list:
        return list(zip(self.months, self.returns.tolist()))

    def __len__(self):
        return len(self.months)

    def holding_months(self, formation_month: MonthKey) -> tuple:
        start = formation_month + self.spec.skip
        return tuple(start + h for h in range(self.spec.k))

    def to_series(self) -> pd.Series:
        index = pd.PeriodIndex([m.to_period() for m in self.months], freq="M")
        label = "CON" if self.spec.side == "CSCON" else "MOM"
        return pd.Series(np.array(self.returns), index=index,
                         name=f"{label}({self.spec.j},{self.spec.k})")

    def __eq__(self, other):
        if not isinstance(other, StrategyReturnSeries):
            return NotImplemented
        return (self.spec == other.spec and self.months == other.months
                and np.array_equal(self.returns, other.returns))

    __hash__ = None


class _PanelArrays:
    """Precomputed views of a panel shared by every formation month."""

    def __init__(self, panel: MonthlyPanel):
        self.panel = panel
        self.returns = panel.returns
        present = ~np.isnan(panel.returns)
        self.counts = np.zeros((panel.n_months + 1, panel.n_stocks), dtype=np.int64)
        np.cumsum(present, axis=0, out=self.counts[1:])

    def complete(self, start: int, stop: int) -> np.ndarray:
        """Mask of stocks with a return in every row of ``start:stop``."""
        T = self.panel.n_months
        if start < 0 or stop > T:
            return np.zeros(self.panel.n_stocks, dtype=bool)
        return (self.counts[stop] - self.counts[start]) == (stop - start)

    def eligible(self, m: int, spec: StrategySpec) -> np.ndarray:
        hold = m + spec.skip
        return np.flatnonzero(self.complete(m - spec.j, m) & self.complete(hold, hold + spec.k))

    def rank(self, m: int, spec: StrategySpec):
        """Column indices of (loser, winner, eligible) at row ``m``."""
        idx = self.eligible(m, spec)
        n = idx.size // spec.decile_count
        if n == 0:
            raise TooFewStocksError(
                f"{self.panel.months[m] if 0 <= m < self.panel.n_months else m}: "
                f"{idx.size} eligible stocks, need at least {spec.decile_count}")
        scores = self.returns[m - spec.j:m, idx].mean(axis=0)
        order = np.argsort(scores, kind="stable")
        return idx[order[:n]], idx[order[idx.size - n:]], idx

    def bh(self, cols: np.ndarray, start: int, k: int) -> float:
        block = self.returns[start:start + k, cols]
        if block.shape[0] != k or np.isnan(block).any():
            raise EligibilityError("portfolio member without a full holding-period return")
        return float(np.mean(np.prod(1.0 + block, axis=0) - 1.0))


def _row(panel: MonthlyPanel, month: MonthKey) -> int:
    return panel.month_index(month)


def eligible_stocks(panel: MonthlyPanel, formation_month: MonthKey,
                    spec: StrategySpec) -> FrozenSet[str]:
    """Stocks with complete estimation and holding histories at ``formation_month``.

    Months outside the panel count as missing, so an out-of-range formation
    month yields an empty set.
    """
    arrays = _PanelArrays(panel)
    idx = arrays.eligible(_row(panel, formation_month), spec)
    return frozenset(panel.stocks[i] for i in idx)


def form_portfolio(panel: MonthlyPanel, formation_month: MonthKey,
                   spec: StrategySpec) -> FormationResult:
    """Rank eligible stocks and return the bottom (loser) and top (winner) deciles.

    Each extreme decile holds ``floor(N / decile_count)`` stocks.

    Raises
    ------
    TooFewStocksError
        Fewer than ``spec.decile_count`` stocks are eligible.
    """
    arrays = _PanelArrays(panel)
    loser, winner, idx = arrays.rank(_row(panel, formation_month), spec)
    return FormationResult(
        formation_month,
        winner=frozenset(panel.stocks[i] for i in winner),
        loser=frozenset(panel.stocks[i] for i in loser),
        eligible_count=int(idx.size),
    )


def buy_and_hold_return(panel: MonthlyPanel, members, start_month: MonthKey, k: int) -> float:
    """Equal-weighted, never rebalanced K-month return of ``members``.

    Equals the mean over members of ``prod(1 + r) - 1`` across the ``k``
    months starting at ``start_month``.
    """
    col = {s: j for j, s in enumerate(panel.stocks)}
    try:
        cols = np.array(sorted(col[s] for s in members), dtype=np.intp)
    except KeyError as exc:
        raise DataValidationError(f"unknown stock {exc.args[0]!r}") from None
    if cols.size == 0:
        raise DataValidationError("empty portfolio")
    start = _row(panel, start_month)
    if start < 0:
        raise EligibilityError(f"{start_month} precedes the panel")
    return _PanelArrays(panel).bh(cols, start, k)


def _series_from_arrays(arrays: _PanelArrays, spec: StrategySpec) -> StrategyReturnSeries:
    panel = arrays.panel
    months, values = [], []
    for m in range(spec.j, panel.n_months - spec.skip - spec.k + 1):
        try:
            loser, winner, _ = arrays.rank(m, spec)
        except TooFewStocksError:
            continue
        hold = m + spec.skip
        con = arrays.bh(loser, hold, spec.k) - arrays.bh(winner, hold, spec.k)
        months.append(panel.months[m])
        values.append(con if spec.side == "CSCON" else -con)
    return StrategyReturnSeries(spec, months, values)


def strategy_series(panel: MonthlyPanel, spec: StrategySpec) -> StrategyReturnSeries:
    """Long-short buy-and-hold return for every formation month that qualifies.

    CSCON is loser minus winner; CSMOM is its exact negation. Formation months
    with fewer than ``decile_count`` eligible stocks are skipped, so a short
    panel gives an empty series.
    """
    return _series_from_arrays(_PanelArrays(panel), spec)


class JKPortfolio(TransformerMixin, BaseEstimator):
    """Scikit-learn style wrapper around :func:`strategy_series`.

    ``transform`` maps a months x stocks return panel (``MonthlyPanel`` or a
    DataFrame with a monthly index) to a Series of long-short buy-and-hold
    returns indexed by formation month.

    Examples
    --------
    >>> con = JKPortfolio(j=12, k=1).fit_transform(frame)  # doctest: +SKIP
    """

    def __init__(self, j=1, k=1, skip=1, side="CSCON", decile_count=10):
        self.j = j
        self.k = k
        self.skip = skip
        self.side = side
        self.decile_count = decile_count

    def fit(self, X, y=None):
        check_panel(X)
        self.spec_ = StrategySpec(self.j, self.k, self.skip, self.side, self.decile_count)
        return self

    def transform(self, X):
        if not hasattr(self, "spec_"):
            from sklearn.exceptions import NotFittedError
            raise NotFittedError("JKPortfolio is not fitted yet; call fit first")
        series = strategy_series(check_panel(X), self.spec_)
        self.n_formations_ = len(series)
        return series.to_series()
