"""AR(1)-GARCH(1,1) and AR(1)-GJR-GARCH(1,1) by Gaussian quasi maximum likelihood.

Model, for an input series ``y_0 .. y_{T-1}``::

    e_t  = y_t - c - phi * y_{t-1}                      t = 1 .. T-1
    h_t  = k + gamma * h_{t-1} + (alpha + xi * [e_{t-1} < 0]) * e_{t-1}**2

The recursion starts from a pre-sample variance equal to the (divide-by-n)
sample variance of the mean residuals and a pre-sample shock of zero, so the
first usable variance is ``k + gamma * s2``. The variance series therefore has
``T - 1`` entries aligned with ``y_1 .. y_{T-1}``.

Estimation runs BFGS on an unconstrained reparameterisation::

    k = exp(a)                      persistence P = logistic(b)
    symmetric:   gamma = P w,  alpha = P (1 - w),            w = logistic(d)
    asymmetric:  gamma = P w1, alpha = 2 P w2, xi = 2 P (w3 - w2),
                 (w1, w2, w3) = softmax(d1, d2, 0)

which keeps ``k > 0``, ``gamma, alpha > 0``, ``alpha + xi > 0`` and
``gamma + alpha + xi / 2 = P < 1``. The data are standardised before fitting
and the estimates mapped back, which leaves the Gaussian likelihood
unchanged up to the Jacobian constant.
"""
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize, signal
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_series
from .exceptions import ConvergenceWarning, DataValidationError, DegenerateInputError

logger = logging.getLogger(__name__)

MIN_OBS = 60
LOG_2PI = math.log(2.0 * math.pi)

# (gamma, alpha, xi) starting points; fixed so fits are reproducible.
START_POINTS = ((0.80, 0.10, 0.05), (0.90, 0.04, 0.02), (0.50, 0.20, 0.10))


@dataclass(frozen=True)
class GarchSpec:
    """Model choice: ``asymmetric`` adds the GJR leverage term.

    ``freeze_xi`` pins the leverage term at zero, which makes an asymmetric
    spec estimate exactly the symmetric model.
    """

    asymmetric: bool = True
    freeze_xi: bool = False

    @property
    def has_xi(self) -> bool:
        return self.asymmetric and not self.freeze_xi

    @property
    def param_names(self) -> tuple:
        return ("c", "phi", "k", "gamma", "alpha") + (("xi",) if self.has_xi else ())


@dataclass(frozen=True)
class GarchParams:
    c: float
    phi: float
    k: float
    gamma: float
    alpha: float
    xi: float = 0.0

    def as_array(self, with_xi=True) -> np.ndarray:
        vals = [self.c, self.phi, self.k, self.gamma, self.alpha]
        return np.array(vals + [self.xi] if with_xi else vals, dtype=float)

    @classmethod
    def from_array(cls, values) -> "GarchParams":
        return cls(*(float(v) for v in values))

    @property
    def persistence(self) -> float:
        return self.gamma + self.alpha + 0.5 * self.xi

    def check(self):
        """Raise unless the parameters give a positive, covariance-stationary variance."""
        if not self.k > 0:
            raise DataValidationError(f"k must be > 0, got {self.k}")
        if self.gamma < 0 or self.alpha < 0 or self.alpha + self.xi < 0:
            raise DataValidationError("need gamma >= 0, alpha >= 0 and alpha + xi >= 0")
        if not self.persistence < 1:
            raise DataValidationError(f"gamma + alpha + xi/2 = {self.persistence} must be < 1")
        if not abs(self.phi) < 1:
            raise DataValidationError(f"|phi| must be < 1, got {self.phi}")
        return self


@dataclass(frozen=True, eq=False)
class GarchFit:
    spec: GarchSpec
    c: float
    phi: float
    k: float
    gamma: float
    alpha: float
    xi: float
    loglik: float
    cond_variance: np.ndarray
    converged: bool
    iterations: int
    std_errors: dict = field(default_factory=dict)
    months: Optional[tuple] = None
    loglik_history: tuple = ()

    @property
    def params(self) -> GarchParams:
        return GarchParams(self.c, self.phi, self.k, self.gamma, self.alpha, self.xi)

    @property
    def n_obs(self) -> int:
        return int(self.cond_variance.size)


def _split(y):
    return y[1:], y[:-1]


def _residual_variance(e):
    d = e - e.mean()
    return float(d @ d) / e.size


def garch_variance(params: GarchParams, y) -> np.ndarray:
    """Conditional variances ``h_1 .. h_{T-1}`` of ``y`` under ``params``."""
    y = np.asarray(y, dtype=float)
    yt, x = _split(y)
    e = yt - params.c - params.phi * x
    return _variance(e, params.k, params.gamma, params.alpha, params.xi)


def _variance(e, k, gamma, alpha, xi):
    a = alpha + xi * (e < 0)
    u = np.empty_like(e)
    u[0] = k + gamma * _residual_variance(e)
    u[1:] = k + a[:-1] * e[:-1] ** 2
    return signal.lfilter([1.0], [1.0, -gamma], u)


def _loglik_terms(theta, y, with_xi, want_grad):
    """Per-observation log-likelihood and, optionally, scores in natural parameters."""
    c, phi, k, gamma, alpha = theta[:5]
    xi = theta[5] if with_xi else 0.0
    yt, x = _split(y)
    e = yt - c - phi * x
    n = e.size
    neg = e < 0
    a = alpha + xi * neg
    s2 = _residual_variance(e)
    u = np.empty(n)
    u[0] = k + gamma * s2
    u[1:] = k + a[:-1] * e[:-1] ** 2
    h = signal.lfilter([1.0], [1.0, -gamma], u)
    if np.any(~(h > 0)):
        return None, None, None
    ll = -0.5 * (LOG_2PI + np.log(h) + e * e / h)
    if not want_grad:
        return ll, h, None

    p = 6 if with_xi else 5
    V = np.zeros((n, p))
    xd = x - x.mean()
    ed = e - e.mean()
    ds2_dphi = -2.0 * float(ed @ xd) / n
    # direct (non-recursive) contributions to dh_t
    V[0, 1] = gamma * ds2_dphi
    V[1:, 0] = -2.0 * a[:-1] * e[:-1]
    V[1:, 1] = -2.0 * a[:-1] * e[:-1] * x[:-1]
    V[:, 2] = 1.0
    V[0, 3] = s2
    V[1:, 3] = h[:-1]
    V[1:, 4] = e[:-1] ** 2
    if with_xi:
        V[1:, 5] = neg[:-1] * e[:-1] ** 2
    dh = signal.lfilter([1.0], [1.0, -gamma], V, axis=0)
    de = np.zeros((n, p))
    de[:, 0] = -1.0
    de[:, 1] = -x
    scores = -0.5 * ((1.0 - e * e / h)[:, None] * dh / h[:, None]
                     + 2.0 * (e / h)[:, None] * de)
    return ll, h, scores


def garch_loglik(params: GarchParams, y, asymmetric: bool = True) -> float:
    """Gaussian log-likelihood ``sum_t -0.5 (log 2 pi h_t + e_t^2 / h_t)``."""
    ll, _, _ = _loglik_terms(params.as_array(asymmetric), np.asarray(y, float), asymmetric, False)
    return -math.inf if ll is None else float(ll.sum())


def garch_loglik_grad(params: GarchParams, y, asymmetric: bool = True) -> np.ndarray:
    """Analytic gradient of :func:`garch_loglik` in ``(c, phi, k, gamma, alpha[, xi])``."""
    _, _, scores = _loglik_terms(params.as_array(asymmetric), np.asarray(y, float), asymmetric, True)
    if scores is None:
        raise DegenerateInputError("non-positive conditional variance")
    return scores.sum(axis=0)


def _logistic(x):
    return 1.0 / (1.0 + math.exp(-x)) if x >= 0 else math.exp(x) / (1.0 + math.exp(x))


def _logit(p):
    return math.log(p / (1.0 - p))


def _softmax(z):
    z = np.asarray(z, float)
    w = np.exp(z - z.max())
    return w / w.sum()


class _Transform:
    """Unconstrained vector <-> natural parameters, with the Jacobian."""

    def __init__(self, with_xi):
        self.with_xi = with_xi

    def to_natural(self, t):
        c, phi, a, b = t[:4]
        k = math.exp(a)
        P = _logistic(b)
        if self.with_xi:
            w = _softmax([t[4], t[5], 0.0])
            return np.array([c, phi, k, P * w[0], 2 * P * w[1], 2 * P * (w[2] - w[1])])
        w = _logistic(t[4])
        return np.array([c, phi, k, P * w, P * (1 - w)])

    def from_natural(self, nat):
        c, phi, k, gamma, alpha = nat[:5]
        xi = nat[5] if self.with_xi else 0.0
        P = gamma + alpha + 0.5 * xi
        head = [c, phi, math.log(k), _logit(P)]
        if self.with_xi:
            w1, w2, w3 = gamma / P, alpha / (2 * P), (alpha + xi) / (2 * P)
            return np.array(head + [math.log(w1 / w3), math.log(w2 / w3)])
        return np.array(head + [_logit(gamma / P)])

    def jacobian(self, t):
        """``d natural / d t`` (rows natural, columns unconstrained)."""
        p = t.size
        J = np.zeros((p, p))
        J[0, 0] = J[1, 1] = 1.0
        J[2, 2] = math.exp(t[2])
        P = _logistic(t[3])
        dP = P * (1 - P)
        if self.with_xi:
            w = _softmax([t[4], t[5], 0.0])
            dw = np.diag(w) - np.outer(w, w)  # dw_i / dz_j, j over all three logits
            J[3, 3], J[4, 3], J[5, 3] = w[0] * dP, 2 * w[1] * dP, 2 * (w[2] - w[1]) * dP
            for col, j in ((4, 0), (5, 1)):
                J[3, col] = P * dw[0, j]
                J[4, col] = 2 * P * dw[1, j]
                J[5, col] = 2 * P * (dw[2, j] - dw[1, j])
        else:
            w = _logistic(t[4])
            dw = w * (1 - w)
            J[3, 3], J[4, 3] = w * dP, (1 - w) * dP
            J[3, 4], J[4, 4] = P * dw, -P * dw
        return J


def _ar1_start(z):
    yt, x = _split(z)
    X = np.column_stack([np.ones_like(x), x])
    (c, phi), *_ = np.linalg.lstsq(X, yt, rcond=None)
    phi = float(np.clip(phi, -0.9, 0.9))
    return float(c), phi, _residual_variance(yt - c - phi * x)


def _numeric_hessian(theta, z, with_xi):
    p = theta.size
    H = np.zeros((p, p))
    for j in range(p):
        step = 1e-5 * max(abs(theta[j]), 1e-3)
        up, dn = theta.copy(), theta.copy()
        up[j] += step
        dn[j] -= step
        _, _, s_up = _loglik_terms(up, z, with_xi, True)
        _, _, s_dn = _loglik_terms(dn, z, with_xi, True)
        if s_up is None or s_dn is None:
            return None
        H[:, j] = (s_up.sum(axis=0) - s_dn.sum(axis=0)) / (2 * step)
    return 0.5 * (H + H.T)


def _std_errors(theta, z, with_xi):
    H = _numeric_hessian(theta, z, with_xi)
    if H is None:
        return np.full(theta.size, np.nan)
    try:
        cov = np.linalg.inv(-H)
    except np.linalg.LinAlgError:
        return np.full(theta.size, np.nan)
    d = np.diag(cov)
    return np.where(d > 0, np.sqrt(np.abs(d)), np.nan)


def _optimise(z, transform, start, max_iter, tol):
    n = z.size - 1
    with_xi = transform.with_xi
    history = []

    def objective(t):
        nat = transform.to_natural(t)
        ll, _, scores = _loglik_terms(nat, z, with_xi, True)
        if ll is None or not np.isfinite(ll.sum()):
            return np.inf, np.zeros_like(t)
        grad = transform.jacobian(t).T @ scores.sum(axis=0)
        return -ll.sum() / n, -grad / n

    def callback(intermediate_result):
        history.append(-intermediate_result.fun * n)

    t0 = transform.from_natural(start)
    f0, _ = objective(t0)
    history.append(-f0 * n)
    res = optimize.minimize(objective, t0, jac=True, method="BFGS", callback=callback,
                            options={"maxiter": max_iter, "gtol": 1e-9})
    small_change = (len(history) >= 2 and abs(history[-1] - history[-2])
                    <= tol * max(abs(history[-1]), 1.0))
    converged = bool(res.success or (res.status == 2 and small_change))
    return res, converged, history


def fit_garch(series, spec: GarchSpec = GarchSpec(), months=None,
              max_iter: int = 500, tol: float = 1e-8) -> GarchFit:
    """Gaussian QML fit of an AR(1)-(GJR-)GARCH(1,1) model.

    Three fixed starting points are tried and the best likelihood is kept.
    ``months``, if given, labels the input observations; the fit then carries
    the labels of the usable observations (all but the first).

    A fit that hits ``max_iter`` without meeting the tolerance is still
    returned, with ``converged=False`` and a :class:`ConvergenceWarning`.
    """
    y = check_series(series, min_length=MIN_OBS, name="GARCH input")
    if months is not None and len(months) != y.size:
        raise DataValidationError("months and series differ in length")
    scale = float(np.std(y))
    z = y / scale
    with_xi = spec.has_xi
    transform = _Transform(with_xi)
    c0, phi0, s2 = _ar1_start(z)
    if not s2 > 0:
        raise DegenerateInputError("AR(1) residuals have zero variance")

    best = None
    for gamma, alpha, xi in START_POINTS:
        if not with_xi:
            alpha, xi = alpha + 0.5 * xi, 0.0
        P = gamma + alpha + 0.5 * xi
        start = [c0, phi0, s2 * (1 - P), gamma, alpha] + ([xi] if with_xi else [])
        res, converged, history = _optimise(z, transform, np.array(start), max_iter, tol)
        if best is None or res.fun < best[0].fun:
            best = (res, converged, history)
    res, converged, history = best

    nat = transform.to_natural(res.x)
    ll, h, _ = _loglik_terms(nat, z, with_xi, False)
    se = _std_errors(nat, z, with_xi)
    n = z.size - 1
    unscale = np.array([scale, 1.0, scale ** 2, 1.0, 1.0, 1.0][:nat.size])
    nat_y = nat * unscale
    se_y = se * unscale
    loglik = float(ll.sum()) - n * math.log(scale)
    if not converged:
        msg = f"GARCH fit did not converge after {res.nit} iterations: {res.message}"
        logger.warning(msg)
        warnings.warn(msg, ConvergenceWarning, stacklevel=2)
    xi_hat = float(nat_y[5]) if with_xi else 0.0
    cond = np.array(h * scale ** 2)
    cond.setflags(write=False)
    return GarchFit(
        spec=spec, c=float(nat_y[0]), phi=float(nat_y[1]), k=float(nat_y[2]),
        gamma=float(nat_y[3]), alpha=float(nat_y[4]), xi=xi_hat,
        loglik=loglik, cond_variance=cond, converged=converged, iterations=int(res.nit),
        std_errors=dict(zip(spec.param_names, map(float, se_y))),
        months=None if months is None else tuple(months[1:]),
        loglik_history=tuple(v - n * math.log(scale) for v in history),
    )


def conditional_variance(fit: GarchFit) -> np.ndarray:
    """Fitted conditional variances, one per usable observation (see ``fit.months``)."""
    return fit.cond_variance


class GJRGarch(TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``fit`` estimates the model, ``transform`` filters variances.

    Parameters
    ----------
    asymmetric : bool, default True
        Include the leverage term (GJR). ``False`` gives AR(1)-GARCH(1,1).
    max_iter, tol : optimiser limits.
    """

    def __init__(self, asymmetric=True, max_iter=500, tol=1e-8):
        self.asymmetric = asymmetric
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, y, X=None):
        self.fit_ = fit_garch(y, GarchSpec(asymmetric=self.asymmetric),
                              max_iter=self.max_iter, tol=self.tol)
        self.params_ = self.fit_.params
        self.loglik_ = self.fit_.loglik
        self.conditional_variance_ = self.fit_.cond_variance
        return self

    def transform(self, y):
        if not hasattr(self, "params_"):
            from sklearn.exceptions import NotFittedError
            raise NotFittedError("GJRGarch is not fitted yet")
        return garch_variance(self.params_, check_series(y, min_length=2, allow_constant=True))
