"""Monthly/daily input panels: types, CSV loaders and calendar alignment.

Everything produced here is immutable. Arrays are copied on construction and
flagged read-only so downstream code can share them freely.
"""
import csv
import datetime as dt
import logging
import math
import warnings
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from .exceptions import (
    DataValidationError,
    DuplicateCellError,
    EmptyIntersectionError,
    OrderingError,
)

logger = logging.getLogger(__name__)

MISSING_TOKENS = frozenset({"", "NA", "NaN", "nan", "null"})


@dataclass(frozen=True, order=True)
class MonthKey:
    year: int
    month: int

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise ValueError(f"month must be in 1..12, got {self.month}")

    @property
    def ordinal(self) -> int:
        return self.year * 12 + self.month - 1

    @classmethod
    def from_ordinal(cls, ordinal: int) -> "MonthKey":
        year, m0 = divmod(int(ordinal), 12)
        return cls(year, m0 + 1)

    @classmethod
    def parse(cls, text: str) -> "MonthKey":
        """Parse ``YYYY-MM``."""
        year, month = text.strip().split("-")
        return cls(int(year), int(month))

    def __add__(self, n):
        if isinstance(n, (int, np.integer)):
            return MonthKey.from_ordinal(self.ordinal + int(n))
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, MonthKey):
            return self.ordinal - other.ordinal
        if isinstance(other, (int, np.integer)):
            return MonthKey.from_ordinal(self.ordinal - int(other))
        return NotImplemented

    def __str__(self):
        return f"{self.year:04d}-{self.month:02d}"

    def to_period(self) -> pd.Period:
        return pd.Period(year=self.year, month=self.month, freq="M")


def month_range(start: MonthKey, end: MonthKey) -> tuple:
    """Inclusive calendar range ``start..end``."""
    return tuple(MonthKey.from_ordinal(o) for o in range(start.ordinal, end.ordinal + 1))


def _check_contiguous(months, what):
    for a, b in zip(months, months[1:]):
        if b.ordinal != a.ordinal + 1:
            raise OrderingError(f"{what}: month axis must be strictly increasing "
                                f"without gaps ({a} followed by {b})")


def _frozen(values, dtype=float):
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MonthlyPanel:
    """Months x stocks matrix of simple monthly returns.

    Missing cells are NaN. Stock columns are stored in lexicographic order of
    their identifiers, which is the canonical tie-break order used by the
    portfolio engine.
    """

    months: tuple
    stocks: tuple
    returns: np.ndarray
    dropped: tuple = field(default=(), compare=False)

    def __post_init__(self):
        months = tuple(self.months)
        stocks = tuple(str(s) for s in self.stocks)
        returns = np.asarray(self.returns, dtype=float)
        if returns.ndim != 2 or returns.shape != (len(months), len(stocks)):
            raise DataValidationError(
                f"returns shape {returns.shape} does not match "
                f"{len(months)} months x {len(stocks)} stocks")
        _check_contiguous(months, "MonthlyPanel")
        if len(set(stocks)) != len(stocks):
            raise DataValidationError("stock identifiers must be unique")
        present = ~np.isnan(returns)
        if np.any(returns[present] <= -1.0):
            i, j = np.argwhere(present & (returns <= -1.0))[0]
            raise DataValidationError(
                f"return {returns[i, j]} <= -1 for {stocks[j]} at {months[i]}")
        order = sorted(range(len(stocks)), key=stocks.__getitem__)
        object.__setattr__(self, "months", months)
        object.__setattr__(self, "stocks", tuple(stocks[i] for i in order))
        object.__setattr__(self, "returns", _frozen(returns[:, order]))
        object.__setattr__(self, "dropped", tuple(self.dropped))

    @property
    def n_months(self) -> int:
        return len(self.months)

    @property
    def n_stocks(self) -> int:
        return len(self.stocks)

    @property
    def shape(self):
        return self.returns.shape

    def month_index(self, month: MonthKey) -> int:
        """Row index of ``month``; may fall outside ``0..n_months-1``."""
        return month.ordinal - self.months[0].ordinal

    def slice_months(self, start: MonthKey, end: MonthKey) -> "MonthlyPanel":
        i = max(self.month_index(start), 0)
        j = min(self.month_index(end), self.n_months - 1)
        if j < i:
            raise EmptyIntersectionError(f"no panel months in {start}..{end}")
        return MonthlyPanel(self.months[i:j + 1], self.stocks, self.returns[i:j + 1])

    def to_frame(self) -> pd.DataFrame:
        index = pd.PeriodIndex([m.to_period() for m in self.months], freq="M")
        return pd.DataFrame(np.array(self.returns), index=index, columns=list(self.stocks))

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "MonthlyPanel":
        """Build from a months x stocks frame indexed by monthly periods or dates."""
        index = frame.index
        if not isinstance(index, pd.PeriodIndex):
            index = pd.PeriodIndex(pd.DatetimeIndex(index), freq="M")
        months = tuple(MonthKey(p.year, p.month) for p in index)
        return cls(months, tuple(map(str, frame.columns)), frame.to_numpy(dtype=float))

    def __eq__(self, other):
        if not isinstance(other, MonthlyPanel):
            return NotImplemented
        return (self.months == other.months and self.stocks == other.stocks
                and np.array_equal(self.returns, other.returns, equal_nan=True))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class DailyBars:
    dates: np.ndarray  # datetime64[D]
    returns: np.ndarray
    volume: np.ndarray

    def __len__(self):
        return len(self.dates)


@dataclass(frozen=True, eq=False)
class DailyBarSet:
    """Per-stock daily returns and currency trading volume."""

    bars: Mapping[str, DailyBars]

    def __post_init__(self):
        frozen = {}
        for stock in sorted(self.bars):
            b = self.bars[stock]
            dates = np.array(b.dates, dtype="datetime64[D]")
            dates.setflags(write=False)
            rets, vol = _frozen(b.returns), _frozen(b.volume)
            if not (len(dates) == len(rets) == len(vol)):
                raise DataValidationError(f"{stock}: bar field lengths differ")
            if np.any(np.diff(dates.astype(np.int64)) <= 0):
                raise OrderingError(f"{stock}: dates must be strictly increasing")
            if np.any(vol[~np.isnan(vol)] < 0):
                raise DataValidationError(f"{stock}: negative volume")
            frozen[str(stock)] = DailyBars(dates, rets, vol)
        object.__setattr__(self, "bars", MappingProxyType(frozen))

    @property
    def stocks(self) -> tuple:
        return tuple(self.bars)

    def __len__(self):
        return len(self.bars)

    def __eq__(self, other):
        if not isinstance(other, DailyBarSet):
            return NotImplemented
        if self.stocks != other.stocks:
            return False
        return all(
            np.array_equal(a.dates, b.dates)
            and np.array_equal(a.returns, b.returns, equal_nan=True)
            and np.array_equal(a.volume, b.volume, equal_nan=True)
            for a, b in zip(self.bars.values(), other.bars.values()))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class FactorSeries:
    """Monthly factor returns plus optional index log returns and macro index levels."""

    months: tuple
    mkt: np.ndarray
    smb: np.ndarray
    hml: np.ndarray
    index_return: Optional[np.ndarray] = None
    macro_index: Optional[np.ndarray] = None

    def __post_init__(self):
        months = tuple(self.months)
        _check_contiguous(months, "FactorSeries")
        object.__setattr__(self, "months", months)
        for name in ("mkt", "smb", "hml", "index_return", "macro_index"):
            values = getattr(self, name)
            if values is None:
                continue
            arr = _frozen(values)
            if arr.shape != (len(months),):
                raise DataValidationError(
                    f"factor series {name!r} has length {arr.size}, expected {len(months)}")
            object.__setattr__(self, name, arr)

    def month_index(self, month: MonthKey) -> int:
        return month.ordinal - self.months[0].ordinal

    def slice_months(self, start: MonthKey, end: MonthKey) -> "FactorSeries":
        i = max(self.month_index(start), 0)
        j = min(self.month_index(end), len(self.months) - 1)
        if j < i:
            raise EmptyIntersectionError(f"no factor months in {start}..{end}")
        cut = slice(i, j + 1)
        opt = {n: None if getattr(self, n) is None else getattr(self, n)[cut]
               for n in ("index_return", "macro_index")}
        return FactorSeries(self.months[cut], self.mkt[cut], self.smb[cut], self.hml[cut], **opt)

    def lookup(self) -> dict:
        """``MonthKey -> row index`` map."""
        return {m: i for i, m in enumerate(self.months)}

    def __eq__(self, other):
        if not isinstance(other, FactorSeries):
            return NotImplemented
        if self.months != other.months:
            return False
        for name in ("mkt", "smb", "hml", "index_return", "macro_index"):
            a, b = getattr(self, name), getattr(other, name)
            if (a is None) != (b is None):
                return False
            if a is not None and not np.array_equal(a, b, equal_nan=True):
                return False
        return True

    __hash__ = None


@dataclass(frozen=True)
class IngestConfig:
    """Options for :func:`load_monthly_panel`.

    ``min_valid_obs`` is the number of present returns a stock needs to be
    kept; ``start``/``end`` optionally clip the calendar.
    """

    min_valid_obs: int = 1
    start: Optional[MonthKey] = None
    end: Optional[MonthKey] = None


@dataclass(frozen=True)
class AlignedSample:
    panel: MonthlyPanel
    factors: FactorSeries

    @property
    def months(self) -> tuple:
        return self.panel.months


def _open_csv(path, required):
    fh = open(path, newline="", encoding="utf-8")
    reader = csv.reader(fh)
    try:
        header = [h.strip() for h in next(reader)]
        while not header or header[0].startswith("#"):
            header = [h.strip() for h in next(reader)]
    except StopIteration:
        fh.close()
        raise DataValidationError("empty file", path=path)
    missing = [c for c in required if c not in header]
    if missing:
        fh.close()
        raise DataValidationError(f"header is missing columns {missing}", line=1, path=path)
    return fh, reader, {name: i for i, name in enumerate(header)}


def _rows(reader, header, path):
    width = len(header)
    for row in reader:
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if row[0].startswith("#"):
            continue
        if len(row) != width:
            raise DataValidationError(
                f"expected {width} fields, got {len(row)}", line=reader.line_num, path=path)
        yield reader.line_num, [c.strip() for c in row]


def _parse_float(text, line, path, what, allow_missing=True):
    if text in MISSING_TOKENS:
        if allow_missing:
            return math.nan
        raise DataValidationError(f"missing {what}", line=line, path=path)
    try:
        value = float(text)
    except ValueError:
        raise DataValidationError(f"cannot parse {what} {text!r}", line=line, path=path) from None
    if math.isinf(value):
        raise DataValidationError(f"non-finite {what}", line=line, path=path)
    return value


def _parse_month(year, month, line, path):
    try:
        return MonthKey(int(year), int(month))
    except ValueError as exc:
        raise DataValidationError(f"bad year/month {year!r}/{month!r}: {exc}",
                                  line=line, path=path) from None


def load_monthly_panel(path, config: IngestConfig = IngestConfig()) -> MonthlyPanel:
    """Load a ``stock,year,month,return`` CSV into a :class:`MonthlyPanel`.

    Absent rows and empty/NA return fields are missing cells. Stocks left with
    fewer than ``config.min_valid_obs`` present returns are dropped; the
    dropped identifiers are logged, warned about and kept on
    ``panel.dropped``.
    """
    fh, reader, header = _open_csv(path, ("stock", "year", "month", "return"))
    cells = {}
    with fh:
        for line, row in _rows(reader, header, path):
            stock = row[header["stock"]]
            if not stock:
                raise DataValidationError("empty stock identifier", line=line, path=path)
            month = _parse_month(row[header["year"]], row[header["month"]], line, path)
            value = _parse_float(row[header["return"]], line, path, "return")
            if value <= -1.0:
                raise DataValidationError(
                    f"return {value} <= -1 for {stock} {month}", line=line, path=path)
            key = (stock, month)
            if key in cells:
                raise DuplicateCellError(
                    f"duplicate cell {stock}/{month} (first seen on line {cells[key][1]})",
                    line=line, path=path)
            cells[key] = (value, line)
    if not cells:
        raise DataValidationError("no data rows", path=path)

    first = min(m for _, m in cells)
    last = max(m for _, m in cells)
    if config.start is not None:
        first = max(first, config.start)
    if config.end is not None:
        last = min(last, config.end)
    if last < first:
        raise DataValidationError("no months left after applying start/end", path=path)
    months = month_range(first, last)
    stocks = sorted({s for s, _ in cells})
    col = {s: j for j, s in enumerate(stocks)}
    returns = np.full((len(months), len(stocks)), np.nan)
    for (stock, month), (value, _) in cells.items():
        i = month.ordinal - first.ordinal
        if 0 <= i < len(months):
            returns[i, col[stock]] = value

    valid = np.sum(~np.isnan(returns), axis=0)
    keep = valid >= max(config.min_valid_obs, 1)
    dropped = tuple(s for s, k in zip(stocks, keep) if not k)
    if dropped:
        msg = f"dropped {len(dropped)} stock(s) without enough valid returns: {', '.join(dropped)}"
        logger.warning(msg)
        warnings.warn(msg, UserWarning, stacklevel=2)
    kept = [s for s, k in zip(stocks, keep) if k]
    return MonthlyPanel(months, kept, returns[:, keep], dropped=dropped)


def load_daily_bars(path) -> DailyBarSet:
    """Load a ``stock,date,return,volume`` CSV.

    Dates must be strictly increasing per stock in file order. NA returns or
    volumes are kept as NaN (those days are unusable for illiquidity).
    """
    fh, reader, header = _open_csv(path, ("stock", "date", "return", "volume"))
    per_stock = {}
    with fh:
        for line, row in _rows(reader, header, path):
            stock = row[header["stock"]]
            if not stock:
                raise DataValidationError("empty stock identifier", line=line, path=path)
            try:
                date = dt.date.fromisoformat(row[header["date"]])
            except ValueError:
                raise DataValidationError(f"bad date {row[header['date']]!r}",
                                          line=line, path=path) from None
            ret = _parse_float(row[header["return"]], line, path, "return")
            vol = _parse_float(row[header["volume"]], line, path, "volume")
            if vol < 0:
                raise DataValidationError(f"negative volume {vol}", line=line, path=path)
            entries = per_stock.setdefault(stock, [])
            if entries and date <= entries[-1][0]:
                raise OrderingError(f"{stock}: date {date} does not follow {entries[-1][0]}",
                                    line=line, path=path)
            entries.append((date, ret, vol))
    if not per_stock:
        raise DataValidationError("no data rows", path=path)
    bars = {}
    for stock, entries in per_stock.items():
        dates, rets, vols = zip(*entries)
        bars[stock] = DailyBars(np.array(dates, dtype="datetime64[D]"), rets, vols)
    return DailyBarSet(bars)


FACTOR_COLUMNS = ("year", "month", "mkt", "smb", "hml")
OPTIONAL_FACTOR_COLUMNS = {"index_logret": "index_return", "macro_index": "macro_index"}


def load_factors(path) -> FactorSeries:
    """Load a ``year,month,mkt,smb,hml[,index_logret][,macro_index]`` CSV."""
    fh, reader, header = _open_csv(path, FACTOR_COLUMNS)
    optional = [c for c in OPTIONAL_FACTOR_COLUMNS if c in header]
    months, data = [], {c: [] for c in ("mkt", "smb", "hml", *optional)}
    with fh:
        for line, row in _rows(reader, header, path):
            month = _parse_month(row[header["year"]], row[header["month"]], line, path)
            if months and month.ordinal != months[-1].ordinal + 1:
                raise OrderingError(f"month {month} does not directly follow {months[-1]}",
                                    line=line, path=path)
            months.append(month)
            for c in ("mkt", "smb", "hml"):
                data[c].append(_parse_float(row[header[c]], line, path, c, allow_missing=False))
            for c in optional:
                data[c].append(_parse_float(row[header[c]], line, path, c))
    if not months:
        raise DataValidationError("no data rows", path=path)
    if "macro_index" in data:
        levels = np.asarray(data["macro_index"])
        if np.any(levels[~np.isnan(levels)] <= 0):
            raise DataValidationError("macro_index levels must be positive", path=path)
    kwargs = {OPTIONAL_FACTOR_COLUMNS[c]: data[c] for c in optional}
    return FactorSeries(months, data["mkt"], data["smb"], data["hml"], **kwargs)


def common_months(*axes: Sequence[MonthKey]) -> tuple:
    """Sorted intersection of several month axes."""
    if not axes:
        return ()
    common = set(axes[0])
    for axis in axes[1:]:
        common &= set(axis)
    return tuple(sorted(common))


def align_months(panel: MonthlyPanel, factors: FactorSeries) -> AlignedSample:
    """Restrict ``panel`` and ``factors`` to their common months.

    Inputs are left untouched; new objects are returned.
    """
    months = common_months(panel.months, factors.months)
    if not months:
        raise EmptyIntersectionError(
            f"panel months {panel.months[0]}..{panel.months[-1]} and factor months "
            f"{factors.months[0]}..{factors.months[-1]} do not overlap")
    start, end = months[0], months[-1]
    return AlignedSample(panel.slice_months(start, end), factors.slice_months(start, end))


def _fmt(value):
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return repr(float(value))


def _comment(fh, header_line):
    if header_line:
        fh.write(header_line.rstrip("\n") + "\n")


def write_monthly_panel(panel: MonthlyPanel, path, header_line: Optional[str] = None) -> None:
    """Write ``panel`` in the loader's CSV schema; missing cells are omitted."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        _comment(fh, header_line)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stock", "year", "month", "return"])
        for j, stock in enumerate(panel.stocks):
            for i, month in enumerate(panel.months):
                value = panel.returns[i, j]
                if not np.isnan(value):
                    w.writerow([stock, month.year, month.month, repr(float(value))])


def write_daily_bars(bars: DailyBarSet, path, header_line: Optional[str] = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        _comment(fh, header_line)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stock", "date", "return", "volume"])
        for stock, b in bars.bars.items():
            for d, r, v in zip(b.dates, b.returns, b.volume):
                w.writerow([stock, str(d), _fmt(r), _fmt(v)])


def write_factors(factors: FactorSeries, path, header_line: Optional[str] = None) -> None:
    extra = [(c, getattr(factors, attr)) for c, attr in OPTIONAL_FACTOR_COLUMNS.items()
             if getattr(factors, attr) is not None]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        _comment(fh, header_line)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(FACTOR_COLUMNS) + [c for c, _ in extra])
        for i, m in enumerate(factors.months):
            row = [m.year, m.month, _fmt(factors.mkt[i]), _fmt(factors.smb[i]), _fmt(factors.hml[i])]
            row += [_fmt(values[i]) for _, values in extra]
            w.writerow(row)
