"""Link functions and marginal success probabilities.

Each equation of the joint model turns a linear predictor eta into a
success probability through a link response function: probit, logit, or
cloglog.  The convention is P(Y = 1) = 1 - F(-eta) with F the latent
error CDF, which reduces to the response CDF at eta for the symmetric
links and to 1 - exp(-exp(eta)) for cloglog.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy import special

__all__ = [
    "LINKS",
    "MarginSpec",
    "link_cdf",
    "link_pdf",
    "marginal_prob",
]

LINKS = ("probit", "logit", "cloglog")

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _check_link(link: str) -> None:
    if link not in LINKS:
        raise ValueError(f"unknown link {link!r}; choose from {LINKS}")


def _check_finite(name: str, value) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def link_cdf(link: str, x):
    """Success probability at linear predictor x.

    probit: Phi(x); logit: 1/(1 + e^-x); cloglog: 1 - exp(-exp(x)).
    Saturates to exactly 0 or 1 in the far tails of float range; the
    likelihood layer clamps before using the value as a copula argument.
    """
    _check_link(link)
    x = _check_finite("x", x)
    if link == "probit":
        out = special.ndtr(x)
    elif link == "logit":
        out = special.expit(x)
    else:
        with np.errstate(over="ignore"):
            out = -np.expm1(-np.exp(x))
    out = np.asarray(out)
    return out if out.ndim else float(out)


def link_pdf(link: str, x):
    """Derivative of :func:`link_cdf` with respect to x."""
    _check_link(link)
    x = _check_finite("x", x)
    if link == "probit":
        out = np.exp(-0.5 * x * x) / _SQRT_2PI
    elif link == "logit":
        p = special.expit(x)
        out = p * special.expit(-x)
    else:
        with np.errstate(over="ignore", under="ignore"):
            out = np.exp(x - np.exp(x))
    out = np.asarray(out)
    return out if out.ndim else float(out)


@dataclasses.dataclass(frozen=True)
class MarginSpec:
    """Structure of one equation: link, covariates, smooths, treatment flag.

    ``includes_treatment`` marks the outcome equation, whose linear
    predictor carries the fitted binary treatment with a free coefficient.
    ``smooth_terms`` holds covariate names to be expanded into penalized
    spline bases at design-assembly time.
    """

    link: str = "probit"
    parametric_terms: tuple[str, ...] = ()
    smooth_terms: tuple[str, ...] = ()
    includes_treatment: bool = False

    def __post_init__(self) -> None:
        _check_link(self.link)
        object.__setattr__(self, "parametric_terms", tuple(self.parametric_terms))
        object.__setattr__(self, "smooth_terms", tuple(self.smooth_terms))
        overlap = set(self.parametric_terms) & set(self.smooth_terms)
        if overlap:
            raise ValueError(f"covariates listed as both parametric and smooth: {sorted(overlap)}")


def marginal_prob(margin: MarginSpec, coefficients, design_row):
    """P(Y = 1) for a design row under this margin's link.

    ``design_row`` is one assembled row (or a matrix of rows) aligned with
    ``coefficients``; the product gives eta and the link response maps it
    to a probability.
    """
    coefficients = _check_finite("coefficients", coefficients)
    design_row = _check_finite("design_row", design_row)
    if design_row.ndim == 1:
        if design_row.shape[0] != coefficients.shape[0]:
            raise ValueError(
                f"design row length {design_row.shape[0]} != "
                f"coefficient length {coefficients.shape[0]}"
            )
    elif design_row.shape[-1] != coefficients.shape[0]:
        raise ValueError(
            f"design width {design_row.shape[-1]} != coefficient length {coefficients.shape[0]}"
        )
    eta = design_row @ coefficients
    return link_cdf(margin.link, eta)
