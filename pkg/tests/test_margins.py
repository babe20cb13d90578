"""Tests for link functions and marginal success probabilities."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from copulareg.margins import LINKS, MarginSpec, link_cdf, link_pdf, marginal_prob


def test_links_at_zero():
    assert link_cdf("probit", 0.0) == 0.5
    assert link_cdf("logit", 0.0) == 0.5
    assert link_cdf("cloglog", 0.0) == pytest.approx(1.0 - math.exp(-1.0), abs=1e-15)


def test_probit_matches_normal_cdf():
    assert link_cdf("probit", 1.96) == pytest.approx(0.975002, abs=5e-7)
    xs = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(link_cdf("probit", xs), special.ndtr(xs), atol=1e-15)


@pytest.mark.parametrize("link", LINKS)
def test_pdf_is_derivative_of_cdf(link):
    xs = np.linspace(-5.0, 5.0, 81)
    h = 1e-6
    fd = (link_cdf(link, xs + h) - link_cdf(link, xs - h)) / (2.0 * h)
    np.testing.assert_allclose(link_pdf(link, xs), fd, atol=1e-7)


@pytest.mark.parametrize("link", LINKS)
def test_cdf_strictly_increasing_and_in_unit_interval(link):
    xs = np.linspace(-30.0, 30.0, 301)
    p = link_cdf(link, xs)
    assert np.all(np.diff(p) >= 0.0)
    assert np.all((p >= 0.0) & (p <= 1.0))
    mid = link_cdf(link, np.linspace(-8.0, 3.0, 100))
    assert np.all(np.diff(mid) > 0.0)


def test_symmetry_of_probit_and_logit_and_asymmetry_of_cloglog():
    xs = np.linspace(0.1, 4.0, 20)
    for link in ("probit", "logit"):
        np.testing.assert_allclose(
            link_cdf(link, -xs), 1.0 - link_cdf(link, xs), atol=1e-14
        )
    # cloglog is NOT symmetric: 1 - F(x) differs from F(-x) away from the tails
    gap = np.abs(link_cdf("cloglog", -xs) - (1.0 - link_cdf("cloglog", xs)))
    assert gap.max() > 0.1


@pytest.mark.parametrize("link", LINKS)
def test_extreme_predictors_stay_finite(link):
    vals = link_cdf(link, np.array([-800.0, 800.0]))
    dens = link_pdf(link, np.array([-800.0, 800.0]))
    assert np.all(np.isfinite(vals)) and np.all(np.isfinite(dens))
    assert vals[0] == 0.0 and vals[1] == 1.0


def test_unknown_link_rejected():
    with pytest.raises(ValueError, match="unknown link"):
        link_cdf("cauchit", 0.0)
    with pytest.raises(ValueError):
        MarginSpec(link="identity")


def test_link_rejects_non_finite():
    with pytest.raises(ValueError):
        link_cdf("probit", np.nan)
    with pytest.raises(ValueError):
        link_pdf("logit", np.inf)


def test_margin_spec_rejects_overlapping_terms():
    with pytest.raises(ValueError, match="both parametric and smooth"):
        MarginSpec(parametric_terms=("age",), smooth_terms=("age",))


def test_marginal_prob_row_and_matrix():
    spec = MarginSpec(link="probit", parametric_terms=("a", "b"))
    coef = np.array([0.5, 0.25, 0.1])
    row = np.array([1.0, 2.0, -1.0])
    want = special.ndtr(row @ coef)
    assert marginal_prob(spec, coef, row) == pytest.approx(want, abs=1e-15)
    mat = np.vstack([row, -row])
    got = marginal_prob(spec, coef, mat)
    assert got.shape == (2,)
    assert got[0] == pytest.approx(want, abs=1e-15)


def test_marginal_prob_dimension_mismatch():
    spec = MarginSpec()
    with pytest.raises(ValueError, match="length"):
        marginal_prob(spec, np.ones(3), np.ones(2))
    with pytest.raises(ValueError, match="width"):
        marginal_prob(spec, np.ones(3), np.ones((5, 2)))


def test_marginal_prob_monotone_in_coefficient():
    # raising a coefficient with positive covariate raises the probability
    spec = MarginSpec(link="cloglog")
    row = np.array([1.0, 2.0])
    base = np.array([0.1, 0.3])
    bumped = base + np.array([0.0, 0.5])
    assert marginal_prob(spec, bumped, row) > marginal_prob(spec, base, row)


@settings(max_examples=80, deadline=None)
@given(
    x=st.floats(-40.0, 40.0, allow_nan=False),
    link=st.sampled_from(list(LINKS)),
)
def test_cdf_pdf_consistency_property(x, link):
    p = link_cdf(link, x)
    d = link_pdf(link, x)
    assert 0.0 <= p <= 1.0
    assert d >= 0.0
