"""Tests for the copula layer.

Oracle strategy: the bivariate normal CDF is checked against an
independent Owen's-T reconstruction (scipy.special.owens_t) and the
closed arcsin formula at the origin; Kendall tau conversions are checked
against independent series expansions; partial derivatives are checked
against central finite differences of the CDF.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from copulareg.copulas import (
    FAMILIES,
    T_DF_GRID,
    UNIT_EPS,
    BoundaryError,
    CopulaSpec,
    bivariate_normal_cdf,
    bivariate_t_cdf,
    copula_cdf,
    copula_partials,
    tau_to_theta,
    theta_bounds,
    theta_reparam,
    theta_to_tau,
)

RNG_SEED = 20260816


def _owens_t_bvn(h: float, k: float, rho: float) -> float:
    """Independent BVN CDF via Owen's T function.

    Exact zeros are nudged by 1e-14 (the formula's T terms and quadrant
    correction both jump at h = 0 or k = 0); the induced error is ~4e-15.
    """
    if h == 0.0:
        h = 1e-14
    if k == 0.0:
        k = 1e-14
    s = math.sqrt(1.0 - rho * rho)
    ah = (k - rho * h) / (h * s)
    ak = (h - rho * k) / (k * s)
    beta = 0.5 if h * k < 0 else 0.0
    return float(
        0.5 * (special.ndtr(h) + special.ndtr(k))
        - special.owens_t(h, ah)
        - special.owens_t(k, ak)
        - beta
    )


def _spec_grid() -> list[CopulaSpec]:
    base = [
        CopulaSpec("gaussian", theta=0.6),
        CopulaSpec("gaussian", theta=-0.6),
        CopulaSpec("student_t", theta=0.6, df=5.0),
        CopulaSpec("clayton", theta=2.0),
        CopulaSpec("joe", theta=2.8562),
        CopulaSpec("frank", theta=5.0),
        CopulaSpec("frank", theta=-5.0),
    ]
    rotated = [
        CopulaSpec("clayton", rotation=180, theta=2.0),
        CopulaSpec("joe", rotation=180, theta=2.8562),
        CopulaSpec("gaussian", rotation=180, theta=0.6),
        CopulaSpec("student_t", rotation=180, theta=0.6, df=5.0),
        CopulaSpec("frank", rotation=180, theta=5.0),
    ]
    return base + rotated


# ---------------------------------------------------------------------------
# bivariate normal


def test_bvn_matches_owens_t_reconstruction():
    rng = np.random.default_rng(RNG_SEED)
    rhos = [-0.99, -0.95, -0.926, -0.9, -0.5, -0.2, 0.1, 0.3, 0.6, 0.74, 0.76, 0.9, 0.93, 0.999]
    worst = 0.0
    for rho in rhos:
        for _ in range(30):
            h, k = rng.normal(0.0, 2.5, size=2)
            got = bivariate_normal_cdf(h, k, rho)
            want = _owens_t_bvn(h, k, rho)
            worst = max(worst, abs(got - want))
    assert worst < 1e-12


def test_bvn_zero_correlation_is_product():
    got = bivariate_normal_cdf(0.3, -1.1, 0.0)
    assert got == pytest.approx(special.ndtr(0.3) * special.ndtr(-1.1), abs=1e-15)


@pytest.mark.parametrize("rho", [-0.9, -0.3, 0.5, 0.925, 0.99])
def test_bvn_origin_closed_form(rho):
    # quadrant probability at the origin: 1/4 + arcsin(rho)/(2 pi)
    want = 0.25 + math.asin(rho) / (2.0 * math.pi)
    assert bivariate_normal_cdf(0.0, 0.0, rho) == pytest.approx(want, abs=1e-13)


def test_bvn_infinite_arguments():
    assert bivariate_normal_cdf(np.inf, -1.0, 0.3) == pytest.approx(special.ndtr(-1.0), abs=1e-15)
    assert bivariate_normal_cdf(-np.inf, 5.0, 0.3) == 0.0
    assert bivariate_normal_cdf(np.inf, np.inf, 0.3) == 1.0


def test_bvn_vectorized_shape_and_value():
    x = np.array([0.0, 1.0, -2.0])
    out = bivariate_normal_cdf(x, 0.5, 0.4)
    assert out.shape == (3,)
    assert out[0] == pytest.approx(_owens_t_bvn(0.0, 0.5, 0.4), abs=1e-13)


def test_bvn_rejects_degenerate_rho():
    with pytest.raises(ValueError):
        bivariate_normal_cdf(0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        bivariate_normal_cdf(0.0, 0.0, np.nan)


# ---------------------------------------------------------------------------
# bivariate t


@pytest.mark.parametrize("df", T_DF_GRID)
@pytest.mark.parametrize("rho", [-0.8, 0.2, 0.7])
def test_bvt_origin_closed_form(df, rho):
    # elliptical distributions share the arcsin quadrant formula
    want = 0.25 + math.asin(rho) / (2.0 * math.pi)
    assert bivariate_t_cdf(0.0, 0.0, rho, df) == pytest.approx(want, abs=1e-10)


def test_bvt_large_df_approaches_normal():
    got = bivariate_t_cdf(0.7, -0.4, 0.6, 1e6)
    want = bivariate_normal_cdf(0.7, -0.4, 0.6)
    assert got == pytest.approx(want, abs=1e-5)


def test_bvt_margin_reduction():
    assert bivariate_t_cdf(np.inf, 0.3, 0.5, 5.0) == pytest.approx(
        special.stdtr(5.0, 0.3), abs=1e-12
    )
    assert bivariate_t_cdf(-np.inf, 0.3, 0.5, 5.0) == 0.0


def test_bvt_regression_value():
    # frozen from the quadrature (internal tolerance 1e-8), cross-checked
    # against scipy.stats.multivariate_t Monte Carlo to ~1e-5
    assert bivariate_t_cdf(0.4, -0.3, 0.5, 5.0) == pytest.approx(0.3201315583269221, abs=1e-7)


def test_bvt_extreme_quantile_stays_accurate():
    # upper limit far in the right tail: complementary branch must engage
    got = bivariate_t_cdf(4000.0, 0.3, 0.5, 5.0)
    assert got == pytest.approx(special.stdtr(5.0, 0.3), abs=1e-8)


def test_bvt_rejects_small_df():
    with pytest.raises(ValueError):
        bivariate_t_cdf(0.0, 0.0, 0.5, 2.0)


@pytest.mark.parametrize("df", T_DF_GRID)
@pytest.mark.parametrize("rho", [-0.99, -0.6, 0.3, 0.8, 0.95])
def test_student_copula_batch_path_matches_adaptive_quadrature(df, rho):
    rng = np.random.default_rng(RNG_SEED + 4)
    u = np.concatenate([rng.uniform(0.01, 0.99, 8), [1e-9, 0.5, 1.0 - 1e-9]])
    v = np.concatenate([rng.uniform(0.01, 0.99, 8), [0.5, 1.0 - 1e-9, 1e-9]])
    spec = CopulaSpec("student_t", theta=rho, df=df)
    batch = copula_cdf(u, v, spec)
    x = special.stdtrit(df, u)
    y = special.stdtrit(df, v)
    adaptive = np.array([bivariate_t_cdf(a, b, rho, df) for a, b in zip(x, y)])
    np.testing.assert_allclose(batch, adaptive, atol=5e-9)


# ---------------------------------------------------------------------------
# spec validation


def test_spec_rejects_unknown_family():
    with pytest.raises(ValueError):
        CopulaSpec("gumbel", theta=2.0)


def test_spec_rejects_bad_rotation():
    with pytest.raises(ValueError):
        CopulaSpec("clayton", rotation=90, theta=2.0)


@pytest.mark.parametrize(
    "family,theta",
    [("gaussian", 1.5), ("gaussian", -1.0), ("clayton", 0.0), ("clayton", -1.0),
     ("joe", 1.0), ("joe", 0.5), ("frank", 0.0), ("frank", 501.0)],
)
def test_spec_rejects_theta_outside_domain(family, theta):
    with pytest.raises(ValueError):
        CopulaSpec(family, theta=theta)


def test_spec_with_theta_returns_new_frozen_instance():
    spec = CopulaSpec("clayton")
    assert spec.theta is None
    spec2 = spec.with_theta(2.0)
    assert spec2.theta == 2.0
    assert spec.theta is None
    with pytest.raises(ValueError):
        copula_cdf(0.5, 0.5, spec)  # theta unset


def test_theta_bounds_cover_all_families():
    for family in FAMILIES:
        lo, hi = theta_bounds(family)
        assert lo < hi


# ---------------------------------------------------------------------------
# copula CDF values


def test_clayton_cdf_closed_form_value():
    # (u^-2 + v^-2 - 1)^(-1/2) at u = v = 1/2 equals 7^(-1/2)
    got = copula_cdf(0.5, 0.5, CopulaSpec("clayton", theta=2.0))
    assert got == pytest.approx(7.0 ** -0.5, abs=1e-14)


def test_gaussian_cdf_origin_value():
    got = copula_cdf(0.5, 0.5, CopulaSpec("gaussian", theta=0.5))
    assert got == pytest.approx(0.25 + math.asin(0.5) / (2.0 * math.pi), abs=1e-13)


def test_frank_small_theta_near_independence():
    got = copula_cdf(0.3, 0.7, CopulaSpec("frank", theta=1e-9))
    assert got == pytest.approx(0.21, abs=1e-9)


def test_frank_negative_theta_reflection_identity():
    # C_{-theta}(u, v) = u - C_{theta}(u, 1 - v)
    u, v, th = 0.35, 0.62, 3.0
    got = copula_cdf(u, v, CopulaSpec("frank", theta=-th))
    want = u - copula_cdf(u, 1.0 - v, CopulaSpec("frank", theta=th))
    assert got == pytest.approx(want, abs=1e-12)


def test_rotation_definition_matches_survival_form():
    # C_180(u, v) = u + v - 1 + C(1-u, 1-v)
    rng = np.random.default_rng(RNG_SEED)
    for family, theta in [("clayton", 2.0), ("joe", 3.0), ("frank", 4.0)]:
        u = rng.uniform(0.05, 0.95, 50)
        v = rng.uniform(0.05, 0.95, 50)
        rot = copula_cdf(u, v, CopulaSpec(family, rotation=180, theta=theta))
        want = u + v - 1.0 + copula_cdf(1.0 - u, 1.0 - v, CopulaSpec(family, theta=theta))
        np.testing.assert_allclose(rot, want, atol=1e-13)


def test_radially_symmetric_families_unchanged_by_rotation():
    rng = np.random.default_rng(RNG_SEED)
    u = rng.uniform(0.05, 0.95, 40)
    v = rng.uniform(0.05, 0.95, 40)
    for family, theta in [("gaussian", 0.6), ("frank", 5.0)]:
        plain = copula_cdf(u, v, CopulaSpec(family, theta=theta))
        rot = copula_cdf(u, v, CopulaSpec(family, rotation=180, theta=theta))
        np.testing.assert_allclose(rot, plain, atol=1e-11)


@pytest.mark.parametrize("spec", _spec_grid(), ids=lambda s: s.label + f"_{s.theta:g}")
def test_frechet_bounds_and_margins(spec):
    rng = np.random.default_rng(RNG_SEED)
    u = rng.uniform(0.001, 0.999, 200)
    v = rng.uniform(0.001, 0.999, 200)
    c = copula_cdf(u, v, spec)
    assert np.all(c >= np.maximum(u + v - 1.0, 0.0) - 1e-10)
    assert np.all(c <= np.minimum(u, v) + 1e-10)
    np.testing.assert_allclose(copula_cdf(u, np.ones_like(u), spec), u, atol=1e-9)
    np.testing.assert_allclose(copula_cdf(np.ones_like(v), v, spec), v, atol=1e-9)
    assert np.max(np.abs(copula_cdf(u, np.zeros_like(u), spec))) < 1e-9


@pytest.mark.parametrize(
    "spec",
    [s for s in _spec_grid() if s.family != "student_t"],
    ids=lambda s: s.label + f"_{s.theta:g}",
)
def test_rectangle_inequality(spec):
    # two-increasing: the measure of any rectangle is nonnegative
    rng = np.random.default_rng(RNG_SEED + 1)
    a = rng.uniform(0.01, 0.98, 100)
    b = a + rng.uniform(0.001, 0.99 - a.max(), 100).clip(0.001)
    c1 = rng.uniform(0.01, 0.98, 100)
    c2 = c1 + rng.uniform(0.001, 0.99 - c1.max(), 100).clip(0.001)
    mass = (
        copula_cdf(b, c2, spec)
        - copula_cdf(a, c2, spec)
        - copula_cdf(b, c1, spec)
        + copula_cdf(a, c1, spec)
    )
    assert np.all(mass >= -1e-10)


def test_cdf_rejects_inputs_outside_unit_interval():
    spec = CopulaSpec("gaussian", theta=0.5)
    with pytest.raises(ValueError):
        copula_cdf(-0.1, 0.5, spec)
    with pytest.raises(ValueError):
        copula_cdf(0.5, 1.1, spec)
    with pytest.raises(ValueError):
        copula_cdf(np.nan, 0.5, spec)


def test_boundary_calls_clamped_to_unit_eps():
    spec = CopulaSpec("clayton", theta=2.0)
    assert copula_cdf(0.0, 0.5, spec) == pytest.approx(0.0, abs=1e-11)
    assert copula_cdf(1.0, 0.5, spec) == pytest.approx(0.5, abs=1e-11)
    assert UNIT_EPS == 1e-12


# ---------------------------------------------------------------------------
# partial derivatives


@pytest.mark.parametrize("spec", _spec_grid(), ids=lambda s: s.label + f"_{s.theta:g}")
def test_partials_match_finite_differences(spec):
    rng = np.random.default_rng(RNG_SEED + 2)
    h = 1e-6
    ht = 1e-4 if spec.family == "student_t" else 1e-5
    worst = 0.0
    for _ in range(10):
        u = float(rng.uniform(0.02, 0.98))
        v = float(rng.uniform(0.02, 0.98))
        adu, adv, adt = copula_partials(u, v, spec)
        fdu = (copula_cdf(u + h, v, spec) - copula_cdf(u - h, v, spec)) / (2 * h)
        fdv = (copula_cdf(u, v + h, spec) - copula_cdf(u, v - h, spec)) / (2 * h)
        th = spec.theta
        fdt = (
            copula_cdf(u, v, spec.with_theta(th + ht))
            - copula_cdf(u, v, spec.with_theta(th - ht))
        ) / (2 * ht)
        for a, f in ((adu, fdu), (adv, fdv), (adt, fdt)):
            worst = max(worst, abs(a - f) / max(1.0, abs(f)))
    assert worst < 1e-5


def test_partials_lie_in_unit_interval():
    # dC/du and dC/dv are conditional CDFs
    rng = np.random.default_rng(RNG_SEED + 3)
    u = rng.uniform(0.01, 0.99, 100)
    v = rng.uniform(0.01, 0.99, 100)
    for spec in _spec_grid():
        du, dv, _ = copula_partials(u, v, spec)
        assert np.all((du >= -1e-12) & (du <= 1.0 + 1e-12)), spec.label
        assert np.all((dv >= -1e-12) & (dv <= 1.0 + 1e-12)), spec.label


def test_partials_raise_on_boundary():
    spec = CopulaSpec("gaussian", theta=0.5)
    with pytest.raises(BoundaryError):
        copula_partials(0.0, 0.5, spec)
    with pytest.raises(BoundaryError):
        copula_partials(0.5, 1.0, spec)


@pytest.mark.parametrize(
    "family,theta",
    [("clayton", 80.0), ("clayton", 200.0), ("joe", 60.0), ("frank", 400.0),
     ("frank", -400.0), ("gaussian", 0.999999)],
)
def test_extreme_parameters_stay_finite(family, theta):
    u = np.array([1e-9, 1e-6, 0.5, 1.0 - 1e-6, 1.0 - 1e-9])
    v = np.array([0.5, 1.0 - 1e-9, 1e-9, 0.3, 1.0 - 1e-9])
    spec = CopulaSpec(family, theta=theta)
    c = copula_cdf(u, v, spec)
    assert np.all(np.isfinite(c))
    parts = copula_partials(u, v, spec)
    assert all(np.all(np.isfinite(p)) for p in parts)


# ---------------------------------------------------------------------------
# Kendall tau


def _joe_tau_series(theta: float, terms: int = 200000) -> float:
    # tau = 1 - 4 sum_{k>=1} 1 / (k (theta k + 2)(theta (k-1) + 2))
    k = np.arange(1, terms + 1, dtype=float)
    return float(1.0 - 4.0 * np.sum(1.0 / (k * (theta * k + 2.0) * (theta * (k - 1.0) + 2.0))))


def _frank_tau_series(theta: float) -> float:
    # Debye D1 via the exponential-tail series:
    # D1(x) = (pi^2/6 - sum_k e^{-kx}(x/k + 1/k^2)) / x, geometric tail
    x = abs(theta)
    k = np.arange(1, 200, dtype=float)
    tail = np.sum(np.exp(-k * x) * (x / k + 1.0 / k**2))
    d1 = (math.pi**2 / 6.0 - tail) / x
    tau = 1.0 - 4.0 / x * (1.0 - d1)
    return math.copysign(tau, theta)


def test_gaussian_tau_arcsin():
    got = theta_to_tau(CopulaSpec("gaussian", theta=math.sqrt(0.5)))
    assert got == pytest.approx(0.5, abs=1e-12)
    got = theta_to_tau(CopulaSpec("student_t", theta=-0.3, df=3.0))
    assert got == pytest.approx((2.0 / math.pi) * math.asin(-0.3), abs=1e-12)


def test_clayton_tau_closed_form():
    assert theta_to_tau(CopulaSpec("clayton", theta=2.0)) == 0.5
    assert theta_to_tau(CopulaSpec("clayton", theta=0.5)) == pytest.approx(0.2, abs=1e-14)


@pytest.mark.parametrize("theta", [1.5, 2.0, 2.8562, 5.0, 20.0])
def test_joe_tau_matches_series(theta):
    got = theta_to_tau(CopulaSpec("joe", theta=theta))
    assert got == pytest.approx(_joe_tau_series(theta), abs=1e-6)


def test_joe_tau_half_value():
    got = theta_to_tau(CopulaSpec("joe", theta=2.8562))
    assert got == pytest.approx(0.5, abs=1e-3)


@pytest.mark.parametrize("theta", [0.5, 2.0, 5.0, 36.0, -5.0])
def test_frank_tau_matches_series(theta):
    got = theta_to_tau(CopulaSpec("frank", theta=theta))
    assert got == pytest.approx(_frank_tau_series(theta), abs=1e-9)


def test_frank_tau_is_odd_and_small_theta_linear():
    pos = theta_to_tau(CopulaSpec("frank", theta=5.0))
    neg = theta_to_tau(CopulaSpec("frank", theta=-5.0))
    assert pos == pytest.approx(-neg, abs=1e-12)
    assert theta_to_tau(CopulaSpec("frank", theta=9e-6)) == pytest.approx(1e-6, abs=1e-9)


def test_rotation_preserves_tau():
    for family, theta in [("clayton", 2.0), ("joe", 3.0)]:
        a = theta_to_tau(CopulaSpec(family, theta=theta))
        b = theta_to_tau(CopulaSpec(family, rotation=180, theta=theta))
        assert a == b


@pytest.mark.parametrize(
    "family,tau",
    [("gaussian", -0.8), ("gaussian", 0.3), ("student_t", 0.5), ("clayton", 0.2),
     ("clayton", 0.7), ("joe", 0.1), ("joe", 0.5), ("joe", 0.9), ("frank", -0.6),
     ("frank", 0.25), ("frank", 0.9)],
)
def test_tau_theta_roundtrip(family, tau):
    theta = tau_to_theta(family, 0, tau)
    back = theta_to_tau(CopulaSpec(family, theta=theta))
    assert back == pytest.approx(tau, abs=1e-8)


def test_tau_to_theta_frozen_values():
    assert tau_to_theta("joe", 0, 0.5) == pytest.approx(2.8562572119508154, abs=1e-9)
    assert tau_to_theta("frank", 0, 0.5) == pytest.approx(5.736282707019971, abs=1e-9)
    assert tau_to_theta("clayton", 0, 0.5) == 2.0
    assert tau_to_theta("gaussian", 0, 0.5) == pytest.approx(math.sqrt(0.5), abs=1e-14)


def test_tau_to_theta_rejects_unattainable():
    with pytest.raises(ValueError, match="attainable range"):
        tau_to_theta("clayton", 0, -0.3)
    with pytest.raises(ValueError, match="attainable range"):
        tau_to_theta("joe", 0, 0.0)
    with pytest.raises(ValueError, match="attainable range"):
        tau_to_theta("gaussian", 0, 1.0)
    with pytest.raises(ValueError):
        tau_to_theta("frank", 0, 0.0)


# ---------------------------------------------------------------------------
# reparameterization


@pytest.mark.parametrize("family", FAMILIES)
def test_reparam_roundtrip_and_derivative(family):
    rp = theta_reparam(family)
    theta0 = {"gaussian": 0.4, "student_t": -0.6, "clayton": 3.0, "joe": 2.5, "frank": -8.0}[
        family
    ]
    t = rp.to_unconstrained(theta0)
    assert rp.from_unconstrained(t) == pytest.approx(theta0, abs=1e-10)
    h = 1e-6
    fd = (rp.from_unconstrained(t + h) - rp.from_unconstrained(t - h)) / (2.0 * h)
    assert rp.dtheta(t) == pytest.approx(fd, rel=1e-5)


@pytest.mark.parametrize("family", FAMILIES)
def test_reparam_maps_reals_into_domain(family):
    # tanh saturates to exactly +-1.0 beyond |t| ~ 19, so strict interior
    # membership is only guaranteed over the working box |t| <= 18 that the
    # fitting layer enforces
    rp = theta_reparam(family)
    lo, hi = theta_bounds(family)
    for t in (-30.0, -3.0, 0.0, 3.0, 30.0):
        theta = rp.from_unconstrained(t)
        assert lo <= theta <= hi
    for t in (-18.0, -3.0, 3.0, 18.0):
        theta = rp.from_unconstrained(t)
        if family in ("gaussian", "student_t"):
            assert lo < theta < hi
        elif family == "clayton":
            assert theta > lo
        elif family == "joe":
            assert theta > lo


# ---------------------------------------------------------------------------
# hypothesis property tests


@st.composite
def _interior_points(draw):
    u = draw(st.floats(0.001, 0.999, allow_nan=False))
    v = draw(st.floats(0.001, 0.999, allow_nan=False))
    return u, v


@settings(max_examples=60, deadline=None)
@given(
    pt=_interior_points(),
    family=st.sampled_from(["gaussian", "clayton", "joe", "frank"]),
    tau=st.floats(0.02, 0.95),
)
def test_cdf_within_frechet_bounds_property(pt, family, tau):
    u, v = pt
    theta = tau_to_theta(family, 0, tau)
    c = copula_cdf(u, v, CopulaSpec(family, theta=theta))
    assert max(u + v - 1.0, 0.0) - 1e-10 <= c <= min(u, v) + 1e-10


@settings(max_examples=60, deadline=None)
@given(
    pt=_interior_points(),
    delta=st.floats(1e-4, 0.3),
    family=st.sampled_from(["gaussian", "clayton", "joe", "frank"]),
)
def test_cdf_monotone_in_each_argument(pt, delta, family):
    u, v = pt
    theta = tau_to_theta(family, 0, 0.4)
    spec = CopulaSpec(family, theta=theta)
    u2 = min(u + delta, 0.9999)
    v2 = min(v + delta, 0.9999)
    assert copula_cdf(u2, v, spec) >= copula_cdf(u, v, spec) - 1e-12
    assert copula_cdf(u, v2, spec) >= copula_cdf(u, v, spec) - 1e-12


@settings(max_examples=40, deadline=None)
@given(
    tau=st.floats(-0.9, 0.9).filter(lambda t: abs(t) > 1e-3),
    family=st.sampled_from(["gaussian", "frank"]),
)
def test_tau_roundtrip_property(tau, family):
    theta = tau_to_theta(family, 0, tau)
    assert theta_to_tau(CopulaSpec(family, theta=theta)) == pytest.approx(tau, abs=1e-7)
