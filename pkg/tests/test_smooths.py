"""Tests for the penalized spline basis layer."""

import warnings

import numpy as np
import pytest

from copulareg.smooths import (
    DEFAULT_BASIS_DIM,
    SmoothTerm,
    basis_rows,
    build_basis,
    evaluate_smooth,
)


@pytest.fixture()
def gamma_term():
    rng = np.random.default_rng(7)
    x = rng.gamma(2.0, 1.5, 300)
    return x, build_basis(x, 10, covariate="expr")


def test_shapes_and_centering(gamma_term):
    x, term = gamma_term
    assert term.basis_matrix.shape == (300, 9)
    assert term.penalty.shape == (9, 9)
    assert np.max(np.abs(term.basis_matrix.sum(axis=0))) < 1e-8


def test_penalty_psd_and_rank(gamma_term):
    _, term = gamma_term
    eigs = np.linalg.eigvalsh(term.penalty)
    assert eigs.min() > -1e-10
    # one null direction remains after centering: the linear function
    assert int((eigs > 1e-8 * eigs.max()).sum()) == 8
    rng = np.random.default_rng(11)
    b = rng.normal(size=(1000, 9))
    quad = np.einsum("ij,jk,ik->i", b, term.penalty, b)
    assert quad.min() >= -1e-10


def test_penalty_symmetric(gamma_term):
    _, term = gamma_term
    np.testing.assert_allclose(term.penalty, term.penalty.T, atol=1e-14)


def test_training_points_reproduce_basis_product(gamma_term):
    x, term = gamma_term
    rng = np.random.default_rng(3)
    coef = rng.normal(size=term.n_coef)
    np.testing.assert_array_equal(evaluate_smooth(term, coef, x), term.basis_matrix @ coef)


def test_unpenalized_fit_recovers_linear_function(gamma_term):
    x, term = gamma_term
    y = x.copy()
    beta = np.linalg.lstsq(term.basis_matrix, y - y.mean(), rcond=None)[0]
    fit = term.basis_matrix @ beta + y.mean()
    assert np.max(np.abs(fit - x)) < 1e-6


def test_even_function_fit_is_symmetric():
    xs = np.linspace(-2.0, 2.0, 201)
    term = build_basis(xs, 10, covariate="sym")
    y = xs**2
    beta = np.linalg.lstsq(term.basis_matrix, y - y.mean(), rcond=None)[0]
    h_pos = evaluate_smooth(term, beta, xs)
    h_neg = evaluate_smooth(term, beta, -xs)
    np.testing.assert_allclose(h_pos, h_neg, atol=1e-8)


def test_large_lambda_collapses_to_linear_fit(gamma_term):
    x, term = gamma_term
    rng = np.random.default_rng(5)
    y = 0.3 * x + np.sin(x) + rng.normal(0, 0.2, x.shape)
    B = term.basis_matrix
    beta = np.linalg.solve(B.T @ B + 1e10 * term.penalty, B.T @ (y - y.mean()))
    fit = B @ beta + y.mean()
    line = np.column_stack([np.ones_like(x), x])
    ab = np.linalg.lstsq(line, y, rcond=None)[0]
    np.testing.assert_allclose(fit, line @ ab, atol=1e-4)


def test_edf_monotone_in_lambda(gamma_term):
    # least-squares analogue: tr[(B'B + lam S)^-1 B'B] decreasing, in [1, 9]
    _, term = gamma_term
    B = term.basis_matrix
    H = B.T @ B
    edfs = []
    for lam in [0.0, 0.1, 1.0, 10.0, 1e3, 1e6, 1e10]:
        edf = np.trace(np.linalg.solve(H + lam * term.penalty, H))
        edfs.append(edf)
    assert all(a >= b - 1e-9 for a, b in zip(edfs, edfs[1:]))
    assert edfs[0] == pytest.approx(9.0, abs=1e-6)
    assert 1.0 - 1e-6 <= edfs[-1] <= 9.0


def test_extrapolation_is_linear_and_warned(gamma_term):
    x, term = gamma_term
    rng = np.random.default_rng(9)
    coef = rng.normal(size=term.n_coef)
    hi = x.max()
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        far = evaluate_smooth(term, coef, np.array([hi + 1.0, hi + 2.0, hi + 3.0]))
    assert any("outside" in str(w.message) for w in rec)
    d1 = far[1] - far[0]
    d2 = far[2] - far[1]
    assert d1 == pytest.approx(d2, abs=1e-10)
    edge = evaluate_smooth(term, coef, hi)
    assert far[0] - edge == pytest.approx(d1, abs=1e-10)


def test_interior_evaluation_does_not_warn(gamma_term):
    x, term = gamma_term
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        evaluate_smooth(term, np.zeros(term.n_coef), np.median(x))


def test_zero_coefficients_give_zero_function(gamma_term):
    x, term = gamma_term
    np.testing.assert_array_equal(evaluate_smooth(term, np.zeros(term.n_coef), x), 0.0 * x)


def test_too_few_distinct_values_reduces_dim_with_warning():
    x = np.repeat(np.arange(6, dtype=float), 20)
    with pytest.warns(UserWarning, match="reduced"):
        term = build_basis(x, 10, covariate="few")
    assert term.basis_dim == 6
    assert term.basis_matrix.shape == (120, 5)
    assert any("reduced" in n for n in term.notes)


def test_constant_covariate_rejected():
    with pytest.raises(ValueError, match="constant"):
        build_basis(np.ones(50))


def test_tiny_support_rejected():
    with pytest.raises(ValueError, match="distinct"):
        build_basis(np.repeat([0.0, 1.0, 2.0], 10))


def test_small_basis_dim_rejected():
    with pytest.raises(ValueError, match="basis_dim"):
        build_basis(np.linspace(0, 1, 50), basis_dim=3)


def test_non_finite_and_wrong_shape_rejected():
    with pytest.raises(ValueError):
        build_basis(np.array([0.0, 1.0, np.nan, 2.0, 3.0]))
    with pytest.raises(ValueError):
        build_basis(np.ones((10, 2)))


def test_coefficient_length_checked(gamma_term):
    _, term = gamma_term
    with pytest.raises(ValueError, match="coefficients"):
        evaluate_smooth(term, np.zeros(term.n_coef + 1), 1.0)


def test_default_basis_dim():
    assert DEFAULT_BASIS_DIM == 10
    x = np.linspace(0.0, 1.0, 80)
    term = build_basis(x)
    assert term.basis_dim == 10
    assert isinstance(term, SmoothTerm)


def test_basis_rows_scalar_matches_vector(gamma_term):
    x, term = gamma_term
    row = basis_rows(term, float(x[0]))
    rows = basis_rows(term, x[:3])
    np.testing.assert_allclose(row, rows[0], atol=1e-15)


def test_smooth_is_continuous_across_knots(gamma_term):
    _, term = gamma_term
    rng = np.random.default_rng(21)
    coef = rng.normal(size=term.n_coef)
    for knot in np.unique(term.knots)[1:-1]:
        left = evaluate_smooth(term, coef, knot - 1e-9)
        right = evaluate_smooth(term, coef, knot + 1e-9)
        assert left == pytest.approx(right, abs=1e-6)
