import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from anomalyscan.exceptions import ConvergenceWarning, DataValidationError, DegenerateInputError
from anomalyscan.synth import gen_garch_path
from anomalyscan.volmodels import (
    GarchParams,
    GarchSpec,
    GJRGarch,
    conditional_variance,
    fit_garch,
    garch_loglik,
    garch_loglik_grad,
    garch_variance,
)
from oracles import garch_loglik as oracle_loglik
from oracles import garch_recursion

TRUE = GarchParams(0.0, 0.05, 1e-6, 0.85, 0.08, 0.08)


@pytest.fixture(scope="module")
def gjr_path():
    return gen_garch_path(TRUE, 3000, seed=5).returns


@pytest.fixture(scope="module")
def gjr_fit(gjr_path):
    return fit_garch(gjr_path, GarchSpec(asymmetric=True))


def central_difference(params, y, asymmetric, rel_step=1e-6):
    a = params.as_array(asymmetric)
    out = np.zeros(a.size)
    for i in range(a.size):
        h = rel_step * max(abs(a[i]), 1e-2)
        up, dn = a.copy(), a.copy()
        up[i] += h
        dn[i] -= h
        pad = [] if asymmetric else [0.0]
        out[i] = (garch_loglik(GarchParams.from_array(list(up) + pad), y, asymmetric)
                  - garch_loglik(GarchParams.from_array(list(dn) + pad), y, asymmetric)) / (2 * h)
    return out


class TestRecursion:
    def test_five_step_hand_unrolled(self):
        y = np.array([0.01, -0.02, 0.015, 0.003, -0.011, 0.02])
        p = GarchParams(0.001, 0.1, 2e-5, 0.7, 0.1, 0.15)
        h, _ = garch_recursion(y, *p.as_array())
        assert_allclose(garch_variance(p, y), h, rtol=1e-12, atol=0)
        assert garch_variance(p, y).size == 5

    def test_positive_shocks_ignore_leverage(self):
        y = np.linspace(0.01, 0.3, 30)
        p = GarchParams(-1.0, 0.0, 1e-4, 0.5, 0.2, 0.3)  # every residual is positive
        q = GarchParams(-1.0, 0.0, 1e-4, 0.5, 0.2, 0.0)
        np.testing.assert_array_equal(garch_variance(p, y), garch_variance(q, y))

    def test_zero_dynamics_gives_constant_k(self, rng):
        y = rng.normal(size=50)
        h = garch_variance(GarchParams(0.0, 0.2, 0.37, 0.0, 0.0, 0.0), y)
        np.testing.assert_array_equal(h, np.full(49, 0.37))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(1e-8, 1.0), st.floats(0, 0.6),
           st.floats(0, 0.3), st.floats(-0.2, 0.3))
    def test_positivity(self, seed, k, gamma, alpha, xi):
        xi = max(xi, -alpha)
        y = np.random.default_rng(seed).standard_t(3, size=80)
        h = garch_variance(GarchParams(0.0, 0.1, k, gamma, alpha, xi), y)
        assert np.all(h > 0)

    def test_loglik_matches_oracle(self, gjr_path):
        p = GarchParams(1e-4, 0.03, 2e-6, 0.8, 0.1, 0.05)
        assert garch_loglik(p, gjr_path[:400]) == pytest.approx(
            oracle_loglik(gjr_path[:400], *p.as_array()), rel=1e-12)


class TestGradient:
    @pytest.mark.parametrize("asymmetric", [True, False])
    def test_away_from_optimum(self, gjr_path, asymmetric):
        z = gjr_path / gjr_path.std()
        p = GarchParams(0.02, 0.1, 0.08, 0.8, 0.08, 0.06 if asymmetric else 0.0)
        g = garch_loglik_grad(p, z, asymmetric)
        fd = central_difference(p, z, asymmetric)
        assert_allclose(g, fd, rtol=1e-4)

    def test_at_optimum(self, gjr_path, gjr_fit):
        s = gjr_path.std()
        z = gjr_path / s
        f = gjr_fit
        p = GarchParams(f.c / s, f.phi, f.k / s**2, f.gamma, f.alpha, f.xi)
        g = garch_loglik_grad(p, z)
        fd = central_difference(p, z, True, rel_step=1e-5)
        rel = np.abs(g - fd) / np.maximum(np.maximum(np.abs(g), np.abs(fd)), 1.0)
        assert rel.max() < 1e-4


class TestFit:
    def test_recovers_gjr(self, gjr_fit, gjr_path):
        f = gjr_fit
        assert f.converged
        for name in ("gamma", "alpha", "xi", "k"):
            est, truth, se = getattr(f, name), getattr(TRUE, name), f.std_errors[name]
            assert abs(est - truth) <= max(0.25 * truth, 3 * se)
        assert f.loglik >= garch_loglik(TRUE, gjr_path) - 1e-6

    def test_invariants(self, gjr_fit):
        f = gjr_fit
        assert f.k > 0 and f.gamma >= 0 and f.alpha >= 0
        assert f.gamma + f.alpha + f.xi / 2 < 1
        assert np.all(conditional_variance(f) > 0)
        assert f.n_obs == 2999

    def test_loglik_history_monotone(self, gjr_fit):
        hist = np.array(gjr_fit.loglik_history)
        assert np.all(np.diff(hist) >= -1e-9 * np.abs(hist[1:]))

    def test_symmetric_truth_gives_small_xi(self):
        y = gen_garch_path(GarchParams(0.0, 0.05, 1e-6, 0.85, 0.1, 0.0), 5000, seed=9).returns
        f = fit_garch(y, GarchSpec(asymmetric=True))
        assert abs(f.xi) < 3 * f.std_errors["xi"]

    def test_frozen_xi_equals_symmetric(self, gjr_path):
        a = fit_garch(gjr_path, GarchSpec(asymmetric=True, freeze_xi=True))
        b = fit_garch(gjr_path, GarchSpec(asymmetric=False))
        assert a.xi == 0.0
        assert_allclose(a.params.as_array(), b.params.as_array(), rtol=1e-8, atol=1e-14)

    def test_months_label_usable_observations(self, gjr_path):
        from anomalyscan.panel import MonthKey
        months = tuple(MonthKey(1900, 1) + i for i in range(200))
        f = fit_garch(gjr_path[:200], GarchSpec(False), months=months)
        assert f.months == months[1:] and len(f.months) == f.n_obs

    def test_constant_series(self):
        with pytest.raises(DegenerateInputError):
            fit_garch(np.full(100, 0.01))

    def test_too_short(self, rng):
        with pytest.raises(DegenerateInputError):
            fit_garch(rng.normal(size=59))

    def test_non_convergence_flagged(self, gjr_path):
        with pytest.warns(ConvergenceWarning):
            f = fit_garch(gjr_path, max_iter=2)
        assert not f.converged

    def test_deterministic(self, gjr_path):
        a = fit_garch(gjr_path[:500])
        b = fit_garch(gjr_path[:500])
        assert a.params == b.params and a.loglik == b.loglik


class TestParams:
    def test_check(self):
        with pytest.raises(DataValidationError):
            GarchParams(0, 0, 1e-6, 0.9, 0.08, 0.1).check()
        with pytest.raises(DataValidationError):
            GarchParams(0, 0, 0.0, 0.5, 0.1).check()
        TRUE.check()


class TestEstimator:
    def test_fit_transform(self, gjr_path):
        with warnings.catch_warnings():
            warnings.simplefilter("error", ConvergenceWarning)
            est = GJRGarch(asymmetric=False).fit(gjr_path[:600])
        assert est.get_params()["asymmetric"] is False
        assert_allclose(est.transform(gjr_path[:600]), est.conditional_variance_, rtol=1e-10)
