"""Moving-window significance scan over a grid of (J, K) contrarian portfolios.

Windows are laid on the panel calendar: the first covers the first ``window``
months, each next one starts ``step`` months later, and the last is the final
one that still fits. An observation belongs to a window when its formation
month does (the holding period may run past the window end). Each (J, K)
series is built once and then sliced per window.
"""
import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator

from ._validation import check_int, check_panel
from .econometrics import CRIT_5, nw_mean_test
from .exceptions import DataValidationError, DegenerateInputError
from .panel import MonthKey, MonthlyPanel
from .portfolio import StrategySpec, _PanelArrays, _series_from_arrays

DEFAULT_HORIZONS = (1, 6, 12, 18, 24, 30, 36, 42, 48, 54, 60)
DEFAULT_GRID = tuple((j, k) for j in DEFAULT_HORIZONS for k in DEFAULT_HORIZONS)
CLASSES = ("SP", "SN", "NSP", "NSN", "NA")
THREADS_ENV = "ANOMALYSCAN_THREADS"


@dataclass(frozen=True)
class ScanConfig:
    window: int = 60
    step: int = 12
    grid: tuple = DEFAULT_GRID
    skip: int = 1
    side: str = "CSCON"
    decile_count: int = 10
    critical_value: float = CRIT_5
    lag: Optional[int] = None

    def __post_init__(self):
        check_int(self.window, "window", 24)
        check_int(self.step, "step", 1)
        grid = tuple((int(j), int(k)) for j, k in self.grid)
        object.__setattr__(self, "grid", grid)
        for j, k in grid:
            self.spec(j, k)
        if not self.critical_value > 0:
            raise DataValidationError("critical_value must be positive")

    def spec(self, j, k) -> StrategySpec:
        return StrategySpec(j, k, self.skip, self.side, self.decile_count)


def classify(mean: float, t: float, critical_value: float = CRIT_5) -> str:
    if abs(t) >= critical_value:
        return "SP" if mean > 0 else "SN"
    return "NSN" if mean < 0 else "NSP"


def scan_windows(months, window: int, step: int) -> tuple:
    """``(start, end)`` month pairs of every full window."""
    if not months:
        return ()
    first, last = months[0], months[-1]
    out = []
    start = first
    while (start + (window - 1)) <= last:
        out.append((start, start + (window - 1)))
        start = start + step
    return tuple(out)


def window_labels(windows) -> tuple:
    """End year of each window, or ``YYYY-MM`` of the end month when years repeat."""
    years = [str(end.year) for _, end in windows]
    if len(set(years)) == len(years):
        return tuple(years)
    return tuple(str(end) for _, end in windows)


@dataclass(frozen=True, eq=False)
class ScanGrid:
    windows: tuple
    cells: tuple
    classes: np.ndarray  # (cells, windows) of str
    means: np.ndarray
    t_stats: np.ndarray
    n_obs: np.ndarray
    config: Optional[ScanConfig] = field(default=None, compare=False)

    @property
    def labels(self) -> tuple:
        return window_labels(self.windows)

    def cell(self, j, k, w) -> str:
        return str(self.classes[self.cells.index((j, k)), w])

    def to_frame(self) -> pd.DataFrame:
        index = pd.MultiIndex.from_tuples(self.cells, names=["j", "k"]) if self.cells else \
            pd.MultiIndex.from_arrays([[], []], names=["j", "k"])
        return pd.DataFrame(self.classes, index=index, columns=list(self.labels))

    def __eq__(self, other):
        if not isinstance(other, ScanGrid):
            return NotImplemented
        return (self.windows == other.windows and self.cells == other.cells
                and np.array_equal(self.classes, other.classes))

    __hash__ = None


def resolve_threads(n_jobs: Optional[int] = None) -> int:
    """Requested thread count, capped by ``$ANOMALYSCAN_THREADS`` when set."""
    n = n_jobs if n_jobs is not None else (os.cpu_count() or 1)
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            n = min(n, int(cap))
        except ValueError:
            raise DataValidationError(f"{THREADS_ENV} must be an integer, got {cap!r}") from None
    return max(1, int(n))


def _scan_cell(arrays, config, windows, j, k):
    series = _series_from_arrays(arrays, config.spec(j, k))
    ordinals = np.array([m.ordinal for m in series.months], dtype=np.int64)
    values = series.returns
    n_w = len(windows)
    classes = ["NA"] * n_w
    means = np.full(n_w, np.nan)
    ts = np.full(n_w, np.nan)
    counts = np.zeros(n_w, dtype=np.int64)
    for w, (start, end) in enumerate(windows):
        lo = np.searchsorted(ordinals, start.ordinal, side="left")
        hi = np.searchsorted(ordinals, end.ordinal, side="right")
        counts[w] = hi - lo
        if hi - lo < 2:
            continue
        try:
            res = nw_mean_test(values[lo:hi], lag=config.lag)
        except DegenerateInputError:
            continue
        means[w], ts[w] = res.mean, res.hac_t
        classes[w] = classify(res.mean, res.hac_t, config.critical_value)
    return classes, means, ts, counts


def run_scan(panel: MonthlyPanel, config: ScanConfig = ScanConfig(),
             n_jobs: Optional[int] = None) -> ScanGrid:
    """Classify every (J, K) cell in every window as SP, SN, NSP, NSN or NA.

    Cells are independent and may be evaluated on several threads; the
    result does not depend on the thread count.
    """
    windows = scan_windows(panel.months, config.window, config.step)
    arrays = _PanelArrays(panel)
    cells = config.grid

    def work(cell):
        return _scan_cell(arrays, config, windows, *cell)

    threads = resolve_threads(n_jobs)
    if threads > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, cells))
    else:
        results = [work(c) for c in cells]

    shape = (len(cells), len(windows))
    classes = np.empty(shape, dtype=object)
    means, ts = np.full(shape, np.nan), np.full(shape, np.nan)
    counts = np.zeros(shape, dtype=np.int64)
    for i, (cl, mu, t, n) in enumerate(results):
        classes[i, :] = cl
        means[i], ts[i], counts[i] = mu, t, n
    return ScanGrid(windows, cells, classes, means, ts, counts, config)


def format_number(x, raw=False) -> str:
    """6 significant digits, or ``repr`` precision when ``raw``; NaN prints as NA."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "NA"
    return repr(float(x)) if raw else f"{float(x):.6g}"


def emit_grid(grid: ScanGrid, path, header_line: Optional[str] = None) -> None:
    """Write ``j,k,<label>...`` rows of class labels in grid order."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header_line:
            fh.write(header_line.rstrip("\n") + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["j", "k", *grid.labels])
        for i, (j, k) in enumerate(grid.cells):
            w.writerow([j, k, *grid.classes[i]])


def emit_values(grid: ScanGrid, path, header_line: Optional[str] = None, raw=False) -> None:
    """Long-format companion file with the mean and HAC t behind each cell."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header_line:
            fh.write(header_line.rstrip("\n") + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["j", "k", "window_start", "window_end", "label", "n", "mean", "t", "class"])
        labels = grid.labels
        for i, (j, k) in enumerate(grid.cells):
            for c, (start, end) in enumerate(grid.windows):
                w.writerow([j, k, start, end, labels[c], int(grid.n_obs[i, c]),
                            format_number(grid.means[i, c], raw),
                            format_number(grid.t_stats[i, c], raw), grid.classes[i, c]])


def read_grid(path) -> pd.DataFrame:
    """Parse a file written by :func:`emit_grid` back into a (J, K) x label frame."""
    frame = pd.read_csv(path, comment="#", dtype=str, keep_default_na=False)
    frame["j"] = frame["j"].astype(int)
    frame["k"] = frame["k"].astype(int)
    return frame.set_index(["j", "k"])


class MovingWindowScanner(BaseEstimator):
    """Estimator front end for :func:`run_scan`.

    ``fit(panel)`` stores the :class:`ScanGrid` on ``grid_``; ``transform``
    returns the class labels as a DataFrame indexed by (J, K).
    """

    def __init__(self, window=60, step=12, grid=DEFAULT_GRID, skip=1, side="CSCON",
                 critical_value=CRIT_5, lag=None, n_jobs=None):
        self.window = window
        self.step = step
        self.grid = grid
        self.skip = skip
        self.side = side
        self.critical_value = critical_value
        self.lag = lag
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        config = ScanConfig(window=self.window, step=self.step, grid=tuple(self.grid),
                            skip=self.skip, side=self.side,
                            critical_value=self.critical_value, lag=self.lag)
        self.grid_ = run_scan(check_panel(X), config, n_jobs=self.n_jobs)
        return self

    def transform(self, X=None):
        if not hasattr(self, "grid_"):
            from sklearn.exceptions import NotFittedError
            raise NotFittedError("MovingWindowScanner is not fitted yet")
        return self.grid_.to_frame()
