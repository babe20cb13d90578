"""Penalized cubic spline bases with sum-to-zero identifiability.

Each smooth term expands a continuous covariate into a cubic B-spline
basis with knots at equally spaced quantiles of the distinct observed
values, penalized by the exact integrated squared second derivative.
A QR-derived null-space transform removes the constant direction so the
centered basis columns sum to zero over the training points and the
equation intercept stays identifiable.

Evaluation outside the training range extends the fit linearly from the
boundary (value plus first derivative) rather than trusting the cubic
polynomial tails.
"""

from __future__ import annotations

import dataclasses
import warnings

import numpy as np
from scipy import interpolate, linalg

__all__ = [
    "DEFAULT_BASIS_DIM",
    "SmoothTerm",
    "build_basis",
    "basis_rows",
    "evaluate_smooth",
]

DEFAULT_BASIS_DIM = 10
_MIN_BASIS_DIM = 4  # cubic B-splines need at least 4 basis functions


@dataclasses.dataclass(frozen=True, eq=False)
class SmoothTerm:
    """Immutable spline expansion of one covariate.

    ``basis_matrix`` is the centered n x (basis_dim - 1) training design,
    ``penalty`` the matching centered curvature penalty (PSD, rank
    basis_dim - 2), and ``centering`` the basis_dim x (basis_dim - 1)
    null-space transform used to reproduce the centered columns at new
    covariate values.  ``lam`` and ``edf`` are filled in by the fitting
    layer; ``edf`` equals basis_dim - 1 until then.
    """

    covariate: str
    basis_dim: int
    knots: np.ndarray
    basis_matrix: np.ndarray
    penalty: np.ndarray
    centering: np.ndarray
    data_range: tuple[float, float]
    lam: float = 0.0
    edf: float = 0.0
    notes: tuple[str, ...] = ()

    @property
    def n_coef(self) -> int:
        return self.basis_dim - 1


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


def _raw_spline_design(knots: np.ndarray, x: np.ndarray, deriv: int = 0) -> np.ndarray:
    return interpolate.BSpline.design_matrix(x, knots, 3).toarray() if deriv == 0 else (
        _derivative_design(knots, x, deriv)
    )


def _derivative_design(knots: np.ndarray, x: np.ndarray, deriv: int) -> np.ndarray:
    n_basis = len(knots) - 4
    out = np.empty((x.shape[0], n_basis))
    coef = np.zeros(n_basis)
    for j in range(n_basis):
        coef[j] = 1.0
        out[:, j] = interpolate.BSpline(knots, coef, 3).derivative(deriv)(x)
        coef[j] = 0.0
    return out


def _curvature_penalty(knots: np.ndarray) -> np.ndarray:
    """Exact integral of B_i'' B_j'' over the knot range.

    Second derivatives of cubic B-splines are piecewise linear, so their
    products are piecewise quadratic and Simpson's rule per knot span is
    exact.
    """
    spans = np.unique(knots)
    n_basis = len(knots) - 4
    pen = np.zeros((n_basis, n_basis))
    for a, b in zip(spans[:-1], spans[1:]):
        if b <= a:
            continue
        pts = np.array([a, (a + b) / 2.0, b])
        d2 = _derivative_design(knots, pts, 2)
        w = (b - a) / 6.0
        pen += w * (
            np.outer(d2[0], d2[0]) + 4.0 * np.outer(d2[1], d2[1]) + np.outer(d2[2], d2[2])
        )
    return (pen + pen.T) / 2.0


def _quantile_knots(distinct: np.ndarray, basis_dim: int) -> np.ndarray:
    lo = float(distinct[0])
    hi = float(distinct[-1])
    n_interior = basis_dim - 4
    if n_interior > 0:
        fracs = np.arange(1, n_interior + 1) / (n_interior + 1.0)
        interior = np.quantile(distinct, fracs)
    else:
        interior = np.empty(0)
    return np.concatenate([np.full(4, lo), interior, np.full(4, hi)])


def build_basis(x, basis_dim: int = DEFAULT_BASIS_DIM, covariate: str = "") -> SmoothTerm:
    """Construct the centered spline term for one covariate.

    If the covariate has fewer distinct values than ``basis_dim``, the
    dimension is reduced to that count (never below 4) and the reduction
    is recorded in ``notes`` alongside a UserWarning.  Constant covariates
    are rejected.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("x must be one-dimensional")
    if not np.all(np.isfinite(x)):
        raise ValueError("x contains non-finite values")
    if basis_dim < _MIN_BASIS_DIM:
        raise ValueError(f"basis_dim must be >= {_MIN_BASIS_DIM}, got {basis_dim}")
    distinct = np.unique(x)
    notes: tuple[str, ...] = ()
    if distinct.size <= 1:
        raise ValueError(f"covariate {covariate or 'x'!r} is constant; cannot build a smooth")
    if distinct.size < _MIN_BASIS_DIM:
        raise ValueError(
            f"covariate {covariate or 'x'!r} has only {distinct.size} distinct values; "
            f"a cubic basis needs at least {_MIN_BASIS_DIM}"
        )
    if distinct.size < basis_dim:
        reduced = int(distinct.size)
        msg = (
            f"covariate {covariate or 'x'!r}: basis_dim reduced "
            f"{basis_dim} -> {reduced} (too few distinct values)"
        )
        warnings.warn(msg)
        notes = (msg,)
        basis_dim = reduced

    knots = _quantile_knots(distinct, basis_dim)
    raw = _raw_spline_design(knots, np.clip(x, knots[0], knots[-1]))
    col_sums = raw.sum(axis=0)[:, None]
    # null space of the column-sum constraint: first Householder column of
    # the QR of the constraint vector spans it, the rest are the basis
    q, _ = linalg.qr(col_sums)
    centering = q[:, 1:]
    basis = raw @ centering
    penalty_raw = _curvature_penalty(knots)
    penalty = centering.T @ penalty_raw @ centering
    penalty = (penalty + penalty.T) / 2.0
    return SmoothTerm(
        covariate=covariate,
        basis_dim=basis_dim,
        knots=_freeze(knots),
        basis_matrix=_freeze(basis),
        penalty=_freeze(penalty),
        centering=_freeze(centering),
        data_range=(float(knots[0]), float(knots[-1])),
        lam=0.0,
        edf=float(basis_dim - 1),
        notes=notes,
    )


def basis_rows(term: SmoothTerm, x_new) -> np.ndarray:
    """Centered basis rows at new covariate values.

    Values beyond the training range are extended linearly using the
    basis value and slope at the nearer boundary; a UserWarning records
    how many points fell outside.
    """
    x_new = np.asarray(x_new, dtype=float)
    scalar = x_new.ndim == 0
    x_new = np.atleast_1d(x_new)
    if not np.all(np.isfinite(x_new)):
        raise ValueError("x_new contains non-finite values")
    lo, hi = term.data_range
    below = x_new < lo
    above = x_new > hi
    inside = np.clip(x_new, lo, hi)
    rows = _raw_spline_design(term.knots, inside)
    n_out = int(below.sum() + above.sum())
    if n_out:
        warnings.warn(
            f"smooth {term.covariate!r}: {n_out} evaluation point(s) outside "
            f"[{lo:g}, {hi:g}]; extended linearly"
        )
        for mask, bound in ((below, lo), (above, hi)):
            if not np.any(mask):
                continue
            val = _raw_spline_design(term.knots, np.array([bound]))
            slope = _derivative_design(term.knots, np.array([bound]), 1)
            rows[mask] = val + slope * (x_new[mask] - bound)[:, None]
    out = rows @ term.centering
    return out[0] if scalar else out


def evaluate_smooth(term: SmoothTerm, coefficients, x_new):
    """Fitted smooth h(x) at new covariate values."""
    coefficients = np.asarray(coefficients, dtype=float)
    if coefficients.shape != (term.n_coef,):
        raise ValueError(
            f"smooth {term.covariate!r} expects {term.n_coef} coefficients, "
            f"got shape {coefficients.shape}"
        )
    rows = basis_rows(term, x_new)
    out = rows @ coefficients
    return float(out) if np.ndim(out) == 0 else out
