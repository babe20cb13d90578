"""Reference-estimator tests: binary GLM, Cox partial likelihood, 2SPS."""

import math
import warnings

import numpy as np
import pytest
from scipy import optimize, stats
from scipy.special import expit

from copulareg.comparators import fit_2sps, fit_cox_ph, fit_glm_binary


def test_intercept_only_logit_closed_form():
    # 10 ones among 40: intercept = logit(0.25) = -log(3)
    y = np.array([1.0] * 10 + [0.0] * 30)
    X = np.ones((40, 1))
    f = fit_glm_binary(y, X)
    assert f.coefficients[0] == pytest.approx(-math.log(3.0), abs=1e-10)
    assert f.converged
    p = 0.25
    ll = 40 * (p * math.log(p) + (1 - p) * math.log(1 - p))
    assert f.loglik == pytest.approx(ll, abs=1e-10)
    # Fisher information for the intercept is n*p*(1-p)
    assert f.covariance[0, 0] == pytest.approx(1.0 / (40 * p * (1 - p)), rel=1e-8)


def test_two_by_two_logit_closed_form():
    # saturated 2x2: intercept = log(10/30), slope = log(24/8) - intercept
    y = np.concatenate([np.zeros(30), np.ones(10), np.zeros(8), np.ones(24)])
    x = np.concatenate([np.zeros(40), np.ones(32)])
    X = np.column_stack([np.ones_like(x), x])
    f = fit_glm_binary(y, X)
    assert f.coefficients[0] == pytest.approx(math.log(10 / 30), abs=1e-9)
    assert f.coefficients[1] == pytest.approx(
        math.log(24 / 8) - math.log(10 / 30), abs=1e-9
    )


@pytest.mark.parametrize("link", ["logit", "probit", "cloglog"])
def test_glm_matches_independent_optimizer(link):
    rng = np.random.default_rng(21)
    n = 500
    X = np.column_stack([np.ones(n), rng.normal(size=n), rng.normal(size=n)])
    eta = X @ np.array([-0.3, 0.8, -0.5])
    y = (rng.uniform(size=n) < expit(eta)).astype(float)
    f = fit_glm_binary(y, X, link=link)

    def neg_ll(beta):
        e = X @ beta
        if link == "logit":
            mu = expit(e)
        elif link == "probit":
            mu = stats.norm.cdf(e)
        else:
            mu = 1.0 - np.exp(-np.exp(np.clip(e, -30, 30)))
        mu = np.clip(mu, 1e-12, 1 - 1e-12)
        return -float(np.sum(y * np.log(mu) + (1 - y) * np.log(1 - mu)))

    res = optimize.minimize(neg_ll, np.zeros(3), method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 5000})
    assert f.coefficients == pytest.approx(res.x, abs=2e-5)
    assert -res.fun == pytest.approx(f.loglik, abs=1e-8)
    assert f.converged
    assert f.score_norm < 1e-6


def test_deviance_history_monotone_nonincreasing():
    rng = np.random.default_rng(3)
    X = np.column_stack([np.ones(200), rng.normal(size=200)])
    y = (rng.uniform(size=200) < expit(X @ np.array([0.4, -1.2]))).astype(float)
    f = fit_glm_binary(y, X)
    hist = np.asarray(f.deviance_history)
    assert hist.size >= 2
    assert np.all(np.diff(hist) <= 1e-10)


def test_duplicate_column_dropped_fit_unchanged():
    rng = np.random.default_rng(7)
    X = np.column_stack([np.ones(300), rng.normal(size=300)])
    y = (rng.uniform(size=300) < expit(X @ np.array([0.2, 0.9]))).astype(float)
    base = fit_glm_binary(y, X)
    X_dup = np.column_stack([X, X[:, 1]])
    with pytest.warns(UserWarning, match="aliased"):
        f = fit_glm_binary(y, X_dup)
    assert f.dropped == (2,)
    assert f.coefficients[:2] == pytest.approx(base.coefficients, abs=1e-10)
    assert f.coefficients[2] == 0.0
    assert np.isinf(f.covariance[2, 2])
    assert f.loglik == pytest.approx(base.loglik, abs=1e-10)


def test_separation_warned_and_capped():
    x = np.linspace(-2, 2, 60)
    x = x[np.abs(x) > 0.3]  # gap keeps capped fitted values near 0/1
    y = (x > 0).astype(float)
    X = np.column_stack([np.ones_like(x), x])
    with pytest.warns(UserWarning, match="separation"):
        f = fit_glm_binary(y, X)
    assert f.separation
    assert np.max(np.abs(f.coefficients)) <= 15.0


def test_glm_input_validation():
    X = np.ones((4, 1))
    with pytest.raises(ValueError, match=r"\{0,1\}"):
        fit_glm_binary(np.array([0.0, 1.0, 2.0, 1.0]), X)
    with pytest.raises(ValueError, match="single class"):
        fit_glm_binary(np.ones(4), X)
    with pytest.raises(ValueError, match="one-dimensional"):
        fit_glm_binary(np.ones((4, 1)), X)
    with pytest.raises(ValueError, match="unknown link"):
        fit_glm_binary(np.array([0.0, 1.0, 0.0, 1.0]), X, link="identity")
    bad = X.copy()
    bad[0, 0] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        fit_glm_binary(np.array([0.0, 1.0, 0.0, 1.0]), bad)


def test_cox_analytic_root():
    # three subjects, events at t=1,2,3, covariate pattern (0,1,0):
    # the score is zero at exp(2*beta) = 2
    t = np.array([1.0, 2.0, 3.0])
    s = np.ones(3)
    X = np.array([[0.0], [1.0], [0.0]])
    f = fit_cox_ph(t, s, X)
    assert f.coefficients[0] == pytest.approx(0.5 * math.log(2.0), abs=1e-8)
    assert f.converged


def test_cox_matches_grid_oracle_with_ties():
    # hand-coded Breslow partial likelihood, ties share the pre-event risk set
    t = np.array([3.0, 2.0, 2.0, 1.0])
    s = np.array([1.0, 1.0, 1.0, 0.0])
    x = np.array([0.5, -1.0, 1.5, 0.2])

    def pll(b):
        r3 = math.exp(0.5 * b)
        r2 = r3 + math.exp(-1.0 * b) + math.exp(1.5 * b)
        return b * (0.5 - 1.0 + 1.5) - math.log(r3) - 2.0 * math.log(r2)

    grid = np.linspace(-3, 3, 200001)
    best = grid[np.argmax([pll(b) for b in grid])]
    f = fit_cox_ph(t, s, x.reshape(-1, 1))
    assert f.coefficients[0] == pytest.approx(best, abs=5e-5)
    assert f.partial_loglik == pytest.approx(pll(f.coefficients[0]), abs=1e-10)


def test_cox_monotone_likelihood_warns():
    t = np.array([1.0, 2.0, 3.0])
    s = np.ones(3)
    X = np.array([[1.0], [0.0], [0.0]])  # first death has the largest x
    with pytest.warns(UserWarning, match="monotone"):
        f = fit_cox_ph(t, s, X)
    assert f.coefficients[0] > 15.0


def test_cox_constant_column_flagged():
    rng = np.random.default_rng(11)
    n = 50
    t = rng.exponential(size=n) + 0.01
    s = (rng.uniform(size=n) < 0.7).astype(float)
    X = np.column_stack([np.ones(n), rng.normal(size=n)])
    f = fit_cox_ph(t, s, X)
    assert f.infinite_variance == (0,)
    assert f.coefficients[0] == 0.0
    assert np.isinf(f.covariance[0, 0])
    assert np.isfinite(f.covariance[1, 1])


def test_cox_all_columns_constant_returns_null_model():
    t = np.array([3.0, 2.0, 1.0])
    s = np.array([1.0, 1.0, 0.0])
    f = fit_cox_ph(t, s, np.ones((3, 2)))
    assert f.infinite_variance == (0, 1)
    assert np.all(f.coefficients == 0.0)
    assert f.partial_loglik == pytest.approx(-math.log(2.0), abs=1e-12)
    assert f.converged


def test_cox_input_validation():
    t = np.array([1.0, 2.0])
    s = np.array([1.0, 0.0])
    X = np.ones((2, 1))
    with pytest.raises(ValueError, match="positive"):
        fit_cox_ph(np.array([0.0, 2.0]), s, X)
    with pytest.raises(ValueError, match=r"\{0,1\}"):
        fit_cox_ph(t, np.array([1.0, 2.0]), X)
    with pytest.raises(ValueError, match="no events"):
        fit_cox_ph(t, np.zeros(2), X)
    with pytest.raises(ValueError, match="matching"):
        fit_cox_ph(t, s, np.ones((3, 1)))


def test_cox_risk_sets_use_descending_time_order():
    # shuffling the rows must not change the estimate
    rng = np.random.default_rng(19)
    n = 120
    x = rng.normal(size=n)
    t = rng.exponential(scale=np.exp(-0.6 * x)) + 0.01
    s = (rng.uniform(size=n) < 0.8).astype(float)
    f1 = fit_cox_ph(t, s, x.reshape(-1, 1))
    perm = rng.permutation(n)
    f2 = fit_cox_ph(t[perm], s[perm], x[perm].reshape(-1, 1))
    assert f1.coefficients[0] == pytest.approx(f2.coefficients[0], abs=1e-10)
    assert f1.partial_loglik == pytest.approx(f2.partial_loglik, abs=1e-10)


def test_two_stage_recovers_plugin_effect():
    rng = np.random.default_rng(31)
    n = 20000
    w = rng.normal(size=n)
    z = rng.normal(size=n)
    X1 = np.column_stack([np.ones(n), w, z])
    p1 = expit(X1 @ np.array([0.1, 0.7, 1.1]))
    y1 = (rng.uniform(size=n) < p1).astype(float)
    # outcome depends on the treatment *probability*, the quantity 2SPS plugs in
    y2 = (rng.uniform(size=n) < expit(-0.2 + 0.8 * p1 + 0.5 * w)).astype(float)
    X2 = np.column_stack([np.ones(n), w])
    f = fit_2sps(y2, y1, X1, X2)
    assert f.coefficients[0] == pytest.approx(0.8, abs=0.2)
    assert f.converged


def test_two_stage_perfect_fit_warns():
    # |x| > 1.05 keeps the capped stage-1 predictor past +-15, so the fitted
    # probabilities sit within 1e-6 of the observed classes
    x = np.linspace(-2, 2, 80)
    x = x[np.abs(x) > 1.05]
    y1 = (x > 0).astype(float)
    rng = np.random.default_rng(5)
    y2 = (rng.uniform(size=x.size) < 0.5).astype(float)
    X1 = np.column_stack([np.ones_like(x), x])
    with pytest.warns(UserWarning, match="perfect"):
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            fit_2sps(y2, y1, X1, X1)


def test_two_stage_constant_stage1_aliases_substituted_column():
    # intercept-only stage 1 makes the fitted column constant, so it is
    # aliased with the stage-2 intercept and dropped
    rng = np.random.default_rng(13)
    n = 400
    w = rng.normal(size=n)
    y1 = (rng.uniform(size=n) < 0.5).astype(float)
    y2 = (rng.uniform(size=n) < expit(0.3 * w)).astype(float)
    with pytest.warns(UserWarning, match="aliased"):
        f = fit_2sps(y2, y1, np.ones((n, 1)), np.column_stack([np.ones(n), w]))
    assert 0 in f.dropped or np.isinf(f.covariance[0, 0])
