"""OLS with Newey-West (Bartlett kernel) HAC inference and factor-model fits.

Conventions used throughout:

* autocovariances are divided by T (not T - l);
* Bartlett weights ``1 - l / (L + 1)`` for ``l = 1..L``;
* default lag ``L = floor(4 * (T / 100) ** (2 / 9))``;
* no small-sample degrees-of-freedom correction, two-sided normal critical
  values 1.96 (5%) and 2.576 (1%).
"""
import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator, RegressorMixin

from ._validation import check_design, check_series
from .exceptions import DataValidationError, DegenerateInputError, RankDeficiencyError
from .panel import FactorSeries

CRIT_5 = 1.96
CRIT_1 = 2.576
RANK_TOL = 1e-10


def newey_west_lag(n_obs: int) -> int:
    return int(math.floor(4.0 * (n_obs / 100.0) ** (2.0 / 9.0)))


def _resolve_lag(lag, n_obs):
    if lag is None:
        return newey_west_lag(n_obs)
    if isinstance(lag, bool) or int(lag) != lag or lag < 0:
        raise DataValidationError(f"HAC lag must be a non-negative integer, got {lag!r}")
    return int(lag)


def bartlett_weights(lag: int) -> np.ndarray:
    return 1.0 - np.arange(1, lag + 1) / (lag + 1.0)


def stars(t: float) -> str:
    a = abs(t)
    return "**" if a >= CRIT_1 else "*" if a >= CRIT_5 else ""


def long_run_variance(u: np.ndarray, lag: int) -> float:
    """Bartlett-weighted long-run variance of an already demeaned series."""
    T = u.shape[0]
    s = float(u @ u) / T
    for l, w in enumerate(bartlett_weights(lag), start=1):
        if l >= T:
            break
        s += 2.0 * w * float(u[l:] @ u[:-l]) / T
    return s


def hac_meat(scores: np.ndarray, lag: int) -> np.ndarray:
    """``sum_l w_l (G_l + G_l')`` with ``G_l = (1/T) sum_t s_t s_{t-l}'``."""
    T = scores.shape[0]
    meat = scores.T @ scores / T
    for l, w in enumerate(bartlett_weights(lag), start=1):
        if l >= T:
            break
        g = scores[l:].T @ scores[:-l] / T
        meat += w * (g + g.T)
    return meat


@dataclass(frozen=True)
class MeanTestResult:
    mean: float
    hac_t: float
    n_obs: int
    lag: int

    @property
    def significant_5(self) -> bool:
        return abs(self.hac_t) >= CRIT_5

    @property
    def significant_1(self) -> bool:
        return abs(self.hac_t) >= CRIT_1

    @property
    def stars(self) -> str:
        return stars(self.hac_t)


def nw_mean_test(series, lag: Optional[int] = None) -> MeanTestResult:
    """HAC t-test of a zero mean.

    ``t = mean / sqrt(S / T)`` where ``S`` is the Bartlett long-run variance
    of the demeaned series. With ``lag=0`` this is the one-sample t statistic
    computed with the population (divide-by-T) variance.
    """
    y = check_series(getattr(series, "returns", series), min_length=2, name="return series")
    T = y.size
    L = _resolve_lag(lag, T)
    mean = float(np.mean(y))
    S = long_run_variance(y - mean, L)
    if not S > 0.0:
        raise DegenerateInputError("long-run variance is zero")
    return MeanTestResult(mean, mean / math.sqrt(S / T), T, L)


@dataclass(frozen=True, eq=False)
class RegressionResult:
    names: tuple
    coefficients: np.ndarray
    hac_std_errors: np.ndarray
    t_stats: np.ndarray
    cov: np.ndarray
    n_obs: int
    lag: int
    fitted: np.ndarray
    residuals: np.ndarray

    def __getitem__(self, name):
        i = self.names.index(name)
        return self.coefficients[i], self.hac_std_errors[i], self.t_stats[i]

    @property
    def residual_variance(self) -> float:
        return float(self.residuals @ self.residuals) / self.n_obs

    def rows(self):
        """``(name, estimate, se, t, stars)`` per coefficient."""
        for name, b, se, t in zip(self.names, self.coefficients, self.hac_std_errors, self.t_stats):
            yield name, float(b), float(se), float(t), stars(t)


def _column_names(X, names):
    if names is None:
        return tuple(f"x{i}" for i in range(X.shape[1]))
    names = tuple(names)
    if len(names) != X.shape[1]:
        raise DataValidationError(f"{len(names)} names for {X.shape[1]} columns")
    return names


def ols_hac(y, X, lag: Optional[int] = None,
            names: Optional[Sequence[str]] = None) -> RegressionResult:
    """Least squares via Householder QR with a Newey-West sandwich covariance.

    ``X`` must already contain the intercept column. A column whose
    component orthogonal to the preceding columns is below ``1e-10`` of its
    own norm (or that is identically zero) triggers :class:`RankDeficiencyError`
    naming that column.
    """
    y = check_series(y, min_length=2, name="response", allow_constant=True)
    X = check_design(X, n_rows=y.size)
    names = _column_names(X, names)
    T, p = X.shape
    if T <= p:
        raise DegenerateInputError(f"need more observations ({T}) than regressors ({p})")
    Q, R = np.linalg.qr(X, mode="reduced")
    diag = np.abs(np.diag(R))
    norms = np.linalg.norm(X, axis=0)
    for j in range(p):
        if diag[j] <= RANK_TOL * norms[j] or norms[j] == 0.0:
            raise RankDeficiencyError(names[j])
    beta = scipy.linalg.solve_triangular(R, Q.T @ y)
    fitted = X @ beta
    resid = y - fitted
    L = _resolve_lag(lag, T)
    r_inv = scipy.linalg.solve_triangular(R, np.eye(p))
    bread = r_inv @ r_inv.T  # (X'X)^-1
    cov = bread @ (T * hac_meat(X * resid[:, None], L)) @ bread
    cov = 0.5 * (cov + cov.T)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, beta / se, np.nan)
    return RegressionResult(names, beta, se, t, cov, T, L, fitted, resid)


FACTOR_NAMES = ("MKT", "SMB", "HML")
MIN_REGRESSION_OBS = 10


def holding_factor_returns(series, factors: FactorSeries):
    """Factor returns matched to each observation's holding period.

    Factor returns are compounded over the K holding months so that they span
    the same interval as the buy-and-hold strategy return; for K=1 this is just
    the factor return of the holding month. Observations whose holding months
    are not all covered by ``factors`` are dropped.

    Returns ``(kept_months, y, F)`` with ``F`` of shape ``(n, 3)``.
    """
    lookup = factors.lookup()
    table = np.column_stack([factors.mkt, factors.smb, factors.hml])
    months, ys, rows = [], [], []
    for month, value in zip(series.months, series.returns):
        try:
            idx = [lookup[h] for h in series.holding_months(month)]
        except KeyError:
            continue
        rows.append(np.prod(1.0 + table[idx], axis=0) - 1.0)
        months.append(month)
        ys.append(value)
    return tuple(months), np.asarray(ys, dtype=float), np.asarray(rows, dtype=float).reshape(-1, 3)


def _dummy_lookup(dummy):
    if hasattr(dummy, "months") and hasattr(dummy, "dummy"):
        return dict(zip(dummy.months, (int(v) for v in dummy.dummy)))
    if isinstance(dummy, Mapping):
        return {m: int(v) for m, v in dummy.items()}
    raise TypeError("dummy must be a RegimeSeries or a MonthKey -> 0/1 mapping")


def _factor_regression(series, factors, n_factors, lag, dummy=None, dummy_name="D"):
    months, y, F = holding_factor_returns(series, factors)
    cols = [np.ones(len(y)), *F[:, :n_factors].T]
    names = ["alpha", *FACTOR_NAMES[:n_factors]]
    if dummy is not None:
        lookup = _dummy_lookup(dummy)
        keep = np.array([m in lookup for m in months], dtype=bool)
        y = y[keep]
        cols = [c[keep] for c in cols]
        cols.append(np.array([lookup[m] for m, k in zip(months, keep) if k], dtype=float))
        names.append(dummy_name)
    if len(y) < MIN_REGRESSION_OBS:
        raise DegenerateInputError(
            f"only {len(y)} aligned months, need at least {MIN_REGRESSION_OBS}")
    return ols_hac(y, np.column_stack(cols), lag=lag, names=names)


def fit_capm(series, factors: FactorSeries, lag: Optional[int] = None) -> RegressionResult:
    """``ER_t = alpha + b_MKT MKT_t + e_t`` with HAC standard errors."""
    return _factor_regression(series, factors, 1, lag)


def fit_fftm(series, factors: FactorSeries, lag: Optional[int] = None) -> RegressionResult:
    """Three-factor regression on MKT, SMB and HML."""
    return _factor_regression(series, factors, 3, lag)


def fit_fftm_dummy(series, factors: FactorSeries, dummy, lag: Optional[int] = None,
                   name: str = "D") -> RegressionResult:
    """Three-factor regression plus a 0/1 market-condition dummy.

    The dummy is read at each observation's formation month; observations
    without a dummy value are dropped. A constant dummy is collinear with the
    intercept and raises :class:`RankDeficiencyError`.
    """
    return _factor_regression(series, factors, 3, lag, dummy=dummy, dummy_name=name)


class NeweyWestOLS(RegressorMixin, BaseEstimator):
    """Linear regression with Newey-West HAC standard errors.

    Parameters
    ----------
    lag : int or None
        Bartlett truncation lag; ``None`` uses ``floor(4 (T/100)^(2/9))``.
    fit_intercept : bool
        Prepend a column of ones to ``X``.

    Attributes
    ----------
    coef_, intercept_ : fitted slopes and intercept
    bse_, tvalues_ : HAC standard errors and t statistics (intercept first
        when ``fit_intercept``)
    cov_ : HAC covariance matrix
    lag_ : lag actually used
    """

    def __init__(self, lag=None, fit_intercept=True):
        self.lag = lag
        self.fit_intercept = fit_intercept

    def _design(self, X):
        X = check_design(X)
        if self.fit_intercept:
            X = np.column_stack([np.ones(X.shape[0]), X])
        return X

    def fit(self, X, y):
        design = self._design(X)
        names = (["const"] if self.fit_intercept else []) + [
            f"x{i}" for i in range(design.shape[1] - int(self.fit_intercept))]
        res = ols_hac(y, design, lag=self.lag, names=names)
        self.result_ = res
        self.n_features_in_ = design.shape[1] - int(self.fit_intercept)
        if self.fit_intercept:
            self.intercept_ = float(res.coefficients[0])
            self.coef_ = res.coefficients[1:].copy()
        else:
            self.intercept_ = 0.0
            self.coef_ = res.coefficients.copy()
        self.bse_ = res.hac_std_errors.copy()
        self.tvalues_ = res.t_stats.copy()
        self.cov_ = res.cov.copy()
        self.lag_ = res.lag
        return self

    def predict(self, X):
        if not hasattr(self, "coef_"):
            from sklearn.exceptions import NotFittedError
            raise NotFittedError("NeweyWestOLS is not fitted yet")
        X = check_design(X)
        return X @ self.coef_ + self.intercept_
