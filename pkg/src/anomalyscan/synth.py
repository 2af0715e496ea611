"""Seeded synthetic panels, factor series, daily bars and GARCH paths.

Random numbers come from numpy's PCG64 bit generator (128-bit LCG state with
the XSL-RR 64-bit output permutation), seeded through ``SeedSequence``. Only
raw 64-bit outputs are consumed: uniforms are ``((raw >> 11) + 0.5) / 2**53``
and normals are their inverse-CDF images (``scipy.special.ndtri``), so no
draw ever depends on a rejection loop.

Planted cross-sectional reversal
--------------------------------
Each stock carries a slowly decaying memory of its own past idiosyncratic
shocks, measured relative to the cross-section::

    d_t     = e_t - mean_i(e_t)
    s_t     = decay * s_{t-1} + (1 - decay) * d_{t-1}
    r_t     = rho_t * s_t + loadings . factors_t + e_t

``rho < 0`` means a share ``|rho|`` of every relative shock is given back
over the following months (reversal, profitable for CSCON even across a skip
month); ``rho > 0`` plants continuation. ``rho`` follows the regime schedule
and is zero outside it.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from ._validation import check_int
from .exceptions import DataValidationError
from .panel import DailyBars, DailyBarSet, FactorSeries, MonthKey, MonthlyPanel, month_range
from .volmodels import GarchParams

RETURN_FLOOR = -0.99


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def uniforms(rng: np.random.Generator, size) -> np.ndarray:
    """Open-interval uniforms from the top 53 bits of raw PCG64 outputs."""
    n = int(np.prod(size))
    raw = rng.bit_generator.random_raw(n)
    return (((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53).reshape(size)


def normals(rng: np.random.Generator, size) -> np.ndarray:
    return ndtri(uniforms(rng, size))


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of a synthetic market.

    ``regimes`` is a sequence of ``((start, stop), rho)`` with 0-based,
    half-open month-index ranges.
    """

    seed: int = 0
    n_stocks: int = 100
    n_months: int = 240
    regimes: tuple = ()
    reversal_decay: float = 0.9
    noise: float = 0.08
    factor_mean: tuple = (0.005, 0.002, 0.002)
    factor_vol: tuple = (0.06, 0.03, 0.03)
    loading_mean: tuple = (1.0, 0.0, 0.0)
    loading_sd: tuple = (0.3, 0.5, 0.5)
    start: MonthKey = field(default_factory=lambda: MonthKey(2000, 1))

    def __post_init__(self):
        check_int(self.n_stocks, "n_stocks", 20)
        check_int(self.n_months, "n_months", 24)
        if not 0.0 <= self.reversal_decay < 1.0:
            raise DataValidationError("reversal_decay must lie in [0, 1)")
        if self.noise < 0:
            raise DataValidationError("noise must be >= 0")
        regimes = []
        for (start, stop), rho in self.regimes:
            if not 0 <= start <= stop <= self.n_months:
                raise DataValidationError(f"regime range {start}..{stop} outside 0..{self.n_months}")
            regimes.append(((int(start), int(stop)), float(rho)))
        object.__setattr__(self, "regimes", tuple(regimes))

    def rho_schedule(self) -> np.ndarray:
        rho = np.zeros(self.n_months)
        for (start, stop), value in self.regimes:
            rho[start:stop] = value
        return rho

    @property
    def months(self) -> tuple:
        return month_range(self.start, self.start + (self.n_months - 1))


@dataclass(frozen=True)
class SynthSample:
    panel: MonthlyPanel
    factors: FactorSeries


def stock_ids(n: int) -> tuple:
    width = max(4, len(str(n)))
    return tuple(f"S{i:0{width}d}" for i in range(1, n + 1))


def gen_sample(spec: SynthSpec) -> SynthSample:
    """Panel plus the factor series that drove it (index and macro series included)."""
    rng = make_rng(spec.seed)
    T, N = spec.n_months, spec.n_stocks
    fz = normals(rng, (T, 3))
    bz = normals(rng, (N, 3))
    ez = normals(rng, (T, N))
    factors = np.asarray(spec.factor_mean) + np.asarray(spec.factor_vol) * fz
    loadings = np.asarray(spec.loading_mean) + np.asarray(spec.loading_sd) * bz
    shocks = spec.noise * ez
    rho = spec.rho_schedule()
    lam = spec.reversal_decay

    returns = np.empty((T, N))
    state = np.zeros(N)
    prev_rel = np.zeros(N)
    for t in range(T):
        state = lam * state + (1.0 - lam) * prev_rel
        returns[t] = rho[t] * state + loadings @ factors[t] + shocks[t]
        prev_rel = shocks[t] - shocks[t].mean()
    np.maximum(returns, RETURN_FLOOR, out=returns)

    months = spec.months
    index_logret = np.log1p(np.maximum(factors[:, 0], RETURN_FLOOR))
    macro = gen_garch_path(GarchParams(0.001, 0.3, 2e-6, 0.85, 0.1), T, seed=spec.seed + 7919).returns
    macro_index = 100.0 * np.exp(np.cumsum(macro))
    factor_series = FactorSeries(months, factors[:, 0], factors[:, 1], factors[:, 2],
                                 index_return=index_logret, macro_index=macro_index)
    return SynthSample(MonthlyPanel(months, stock_ids(N), returns), factor_series)


def gen_panel(spec: SynthSpec) -> MonthlyPanel:
    return gen_sample(spec).panel


@dataclass(frozen=True, eq=False)
class GarchPath:
    returns: np.ndarray
    sigma2: np.ndarray
    shocks: np.ndarray
    params: GarchParams


def gen_garch_path(params: GarchParams, T: int, seed: int, burn: int = 500) -> GarchPath:
    """Simulate ``T`` observations of an AR(1)-GJR-GARCH(1,1) process.

    The process starts at its unconditional mean and variance and runs
    ``burn`` discarded steps first. The true conditional variances are kept
    on the result for recovery tests.
    """
    params.check()
    check_int(T, "T", 1)
    z = normals(make_rng(seed), burn + T)
    y_prev = params.c / (1.0 - params.phi)
    h = params.k / (1.0 - params.persistence)
    e = 0.0
    ys, hs, es = np.empty(burn + T), np.empty(burn + T), np.empty(burn + T)
    for t in range(burn + T):
        h = params.k + params.gamma * h + (params.alpha + params.xi * (e < 0)) * e * e
        e = np.sqrt(h) * z[t]
        y_prev = params.c + params.phi * y_prev + e
        ys[t], hs[t], es[t] = y_prev, h, e
    return GarchPath(ys[burn:], hs[burn:], es[burn:], params)


def gen_daily_bars(stocks, months, seed: int, zero_volume_prob: float = 0.02,
                   daily_vol: float = 0.02) -> DailyBarSet:
    """Weekday bars for every stock/month: normal returns, log-normal RMB volume.

    A fraction ``zero_volume_prob`` of days carry zero volume (suspensions).
    """
    rng = make_rng(seed)
    days = []
    for m in months:
        first = np.datetime64(f"{m.year:04d}-{m.month:02d}-01")
        span = np.arange(first, (first.astype("datetime64[M]") + 1).astype("datetime64[D]"))
        days.append(span[np.is_busday(span)])
    dates = np.concatenate(days)
    base = np.exp(15.0 + normals(rng, len(stocks)))
    bars = {}
    for i, stock in enumerate(stocks):
        z = normals(rng, (dates.size, 2))
        u = uniforms(rng, dates.size)
        rets = daily_vol * z[:, 0]
        vol = base[i] * np.exp(0.5 * z[:, 1])
        vol[u < zero_volume_prob] = 0.0
        bars[stock] = DailyBars(dates, rets, vol)
    return DailyBarSet(bars)
