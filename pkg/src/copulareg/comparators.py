"""Baseline estimators: binary GLM, Cox proportional hazards, and 2SPS.

These are the reference methods the joint model is compared against in
the simulation studies and the applied analysis.  They are deliberately
self-contained (no dependence on the joint-likelihood machinery) so they
can serve as independent oracles.
"""

from __future__ import annotations

import dataclasses
import warnings

import numpy as np
from scipy import linalg
from scipy.special import expit

from .margins import LINKS, link_cdf, link_pdf

__all__ = ["CoxFit", "GlmFit", "fit_2sps", "fit_cox_ph", "fit_glm_binary"]

_GLM_COEF_CAP = 15.0


@dataclasses.dataclass(frozen=True)
class GlmFit:
    """Converged binary-response GLM.

    ``dropped`` lists design columns removed as aliased; their coefficient
    entries are zero and their variances infinite.
    """

    coefficients: np.ndarray
    covariance: np.ndarray
    loglik: float
    converged: bool
    link: str
    deviance_history: tuple[float, ...]
    dropped: tuple[int, ...] = ()
    separation: bool = False
    score_norm: float = float("nan")


@dataclasses.dataclass(frozen=True)
class CoxFit:
    """Cox proportional-hazards fit (hazard-scale signs, no intercept).

    Positive coefficients mean higher hazard, i.e. shorter survival.
    ``infinite_variance`` flags covariates with no usable variation,
    reported with coefficient zero.
    """

    coefficients: np.ndarray
    covariance: np.ndarray
    partial_loglik: float
    converged: bool
    infinite_variance: tuple[int, ...] = ()
    ties_method: str = "breslow"
    score_norm: float = float("nan")


def _validate_binary_response(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise ValueError("response must be one-dimensional")
    if not np.all(np.isin(y, [0.0, 1.0])):
        raise ValueError("response must be coded {0,1}")
    if y.sum() == 0.0 or y.sum() == y.shape[0]:
        raise ValueError("response has a single class; cannot fit")
    return y


def _aliased_columns(X: np.ndarray) -> tuple[np.ndarray, tuple[int, ...]]:
    """QR with pivoting: keep a maximal independent column subset."""
    n, p = X.shape
    _, R, piv = linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(n, p) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > tol))
    keep = np.sort(piv[:rank])
    dropped = tuple(int(j) for j in np.sort(piv[rank:]))
    return keep, dropped


def fit_glm_binary(y, X, link: str = "logit", max_iter: int = 100) -> GlmFit:
    """Binary-response GLM by Fisher scoring with step-halving.

    Aliased columns are dropped (recorded in ``dropped``); separation is
    reported with a warning and coefficients capped at +-15.
    """
    if link not in LINKS:
        raise ValueError(f"unknown link {link!r}; choose from {LINKS}")
    y = _validate_binary_response(y)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be a 2-d matrix with one row per response")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite values")
    n, p = X.shape
    keep, dropped = _aliased_columns(X)
    Xr = X[:, keep]
    if dropped:
        warnings.warn(f"rank-deficient design: dropped aliased column(s) {dropped}")

    def loglik_at(beta: np.ndarray) -> float:
        mu = np.clip(np.asarray(link_cdf(link, Xr @ beta)), 1e-300, 1.0 - 1e-16)
        return float(np.sum(y * np.log(mu) + (1.0 - y) * np.log1p(-mu)))

    beta = np.zeros(keep.shape[0])
    ll = loglik_at(beta)
    deviance = [-2.0 * ll]
    converged = False
    for _ in range(max_iter):
        eta = Xr @ beta
        mu = np.clip(np.asarray(link_cdf(link, eta)), 1e-12, 1.0 - 1e-12)
        dens = np.maximum(np.asarray(link_pdf(link, eta)), 1e-12)
        w = dens * dens / (mu * (1.0 - mu))
        score = Xr.T @ ((y - mu) * dens / (mu * (1.0 - mu)))
        info = Xr.T @ (w[:, None] * Xr)
        try:
            step = linalg.solve(info, score, assume_a="pos")
        except linalg.LinAlgError:
            step = linalg.lstsq(info, score)[0]
        # step-halving keeps the deviance monotone for non-canonical links
        new_ll = loglik_at(beta + step)
        halvings = 0
        while new_ll < ll and halvings < 30:
            step = step / 2.0
            new_ll = loglik_at(beta + step)
            halvings += 1
        beta = beta + step
        moved = float(np.max(np.abs(step)))
        ll = new_ll
        deviance.append(-2.0 * ll)
        if moved < 1e-10:
            converged = True
            break

    eta = Xr @ beta
    mu = np.clip(np.asarray(link_cdf(link, eta)), 1e-12, 1.0 - 1e-12)
    dens = np.maximum(np.asarray(link_pdf(link, eta)), 1e-12)
    score = Xr.T @ ((y - mu) * dens / (mu * (1.0 - mu)))
    score_norm = float(np.max(np.abs(score)))
    separation = bool(np.any(np.abs(beta) > _GLM_COEF_CAP))
    if separation:
        warnings.warn(
            "possible separation: coefficient(s) beyond +-15 on the latent "
            "scale were capped"
        )
        beta = np.clip(beta, -_GLM_COEF_CAP, _GLM_COEF_CAP)
        ll = loglik_at(beta)
    w = dens * dens / (mu * (1.0 - mu))
    info = Xr.T @ (w[:, None] * Xr)
    try:
        cov_r = linalg.inv(info)
    except linalg.LinAlgError:
        cov_r = linalg.pinv(info)

    coefficients = np.zeros(p)
    coefficients[keep] = beta
    covariance = np.zeros((p, p))
    covariance[np.ix_(keep, keep)] = cov_r
    for j in dropped:
        covariance[j, j] = np.inf
    return GlmFit(
        coefficients=coefficients,
        covariance=covariance,
        loglik=ll,
        # step-size stop; the residual score scales with the information, so
        # a fixed score gate would fail on large n even at the optimum
        converged=converged,
        link=link,
        deviance_history=tuple(deviance),
        dropped=dropped,
        separation=separation,
        score_norm=score_norm,
    )


def _breslow_parts(beta, times, status, X):
    """Breslow partial log-likelihood with gradient and Hessian.

    Rows must be pre-sorted by descending time so risk sets accumulate.
    """
    eta = X @ beta
    # guard the exp against runaway coefficients during line search
    r = np.exp(np.clip(eta, -500.0, 500.0))
    p = X.shape[1]
    ll = 0.0
    grad = np.zeros(p)
    hess = np.zeros((p, p))
    s0 = 0.0
    s1 = np.zeros(p)
    s2 = np.zeros((p, p))
    i = 0
    n = times.shape[0]
    while i < n:
        j = i
        while j < n and times[j] == times[i]:
            j += 1
        for k in range(i, j):  # everyone tied at this time enters the risk set
            s0 += r[k]
            s1 += r[k] * X[k]
            s2 += r[k] * np.outer(X[k], X[k])
        for k in range(i, j):
            if status[k] == 1.0:
                xbar = s1 / s0
                ll += eta[k] - np.log(s0)
                grad += X[k] - xbar
                hess += s2 / s0 - np.outer(xbar, xbar)
        i = j
    return ll, grad, hess


def fit_cox_ph(time, status, X, max_iter: int = 50) -> CoxFit:
    """Cox proportional hazards by Newton iteration on the Breslow
    partial likelihood.

    Constant covariate columns carry no information: they are reported
    with coefficient zero and flagged in ``infinite_variance``.
    """
    time = np.asarray(time, dtype=float)
    status = np.asarray(status, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != time.shape[0] or status.shape[0] != time.shape[0]:
        raise ValueError("time, status, and X must have matching first dimensions")
    if np.any(time <= 0.0) or not np.all(np.isfinite(time)):
        raise ValueError("times must be positive and finite")
    if not np.all(np.isin(status, [0.0, 1.0])):
        raise ValueError("status must be coded {0,1}")
    if status.sum() == 0.0:
        raise ValueError("no events observed; cannot fit")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite values")

    p = X.shape[1]
    flat = tuple(int(j) for j in range(p) if np.ptp(X[:, j]) == 0.0)
    active = [j for j in range(p) if j not in flat]
    order = np.argsort(-time, kind="stable")
    t_s, d_s, X_s = time[order], status[order], X[order][:, active]

    beta = np.zeros(len(active))
    ll, grad, hess = _breslow_parts(beta, t_s, d_s, X_s)
    converged = False
    for _ in range(max_iter):
        try:
            step = linalg.solve(hess, grad, assume_a="pos")
        except linalg.LinAlgError:
            step = linalg.lstsq(hess, grad)[0]
        new = beta + step
        new_ll, new_grad, new_hess = _breslow_parts(new, t_s, d_s, X_s)
        halvings = 0
        while (not np.isfinite(new_ll) or new_ll < ll) and halvings < 30:
            step = step / 2.0
            new = beta + step
            new_ll, new_grad, new_hess = _breslow_parts(new, t_s, d_s, X_s)
            halvings += 1
        moved = float(np.max(np.abs(step))) if step.size else 0.0
        beta, ll, grad, hess = new, new_ll, new_grad, new_hess
        if moved < 1e-10:
            converged = True
            break
    score_norm = float(np.max(np.abs(grad))) if grad.size else 0.0
    if beta.size and np.max(np.abs(beta)) > 15.0:
        warnings.warn(
            "monotone partial likelihood suspected: coefficient(s) beyond "
            "+-15 on the log-hazard scale"
        )
    try:
        cov_a = linalg.inv(hess) if beta.size else np.zeros((0, 0))
    except linalg.LinAlgError:
        cov_a = linalg.pinv(hess)

    coefficients = np.zeros(p)
    covariance = np.zeros((p, p))
    if active:
        coefficients[active] = beta
        covariance[np.ix_(active, active)] = cov_a
    for j in flat:
        covariance[j, j] = np.inf
    return CoxFit(
        coefficients=coefficients,
        covariance=covariance,
        partial_loglik=float(ll),
        converged=converged,
        infinite_variance=flat,
        score_norm=score_norm,
    )


def fit_2sps(y2, y1, X_stage1, X_stage2) -> GlmFit:
    """Two-stage predictor substitution for a binary endogenous regressor.

    Stage 1 regresses ``y1`` on ``X_stage1`` (logistic); stage 2 regresses
    ``y2`` on the stage-1 fitted probabilities followed by ``X_stage2``.
    The substituted-treatment coefficient is ``coefficients[0]`` of the
    returned stage-2 fit.
    """
    y1 = np.asarray(y1, dtype=float)
    stage1 = fit_glm_binary(y1, X_stage1, link="logit")
    fitted = expit(np.asarray(X_stage1, dtype=float) @ stage1.coefficients)
    if np.max(np.abs(fitted - y1)) < 1e-6:
        warnings.warn(
            "stage-1 fit is perfect (fitted values equal the treatment); "
            "stage-2 estimates will be unstable"
        )
    X2 = np.column_stack([fitted, np.asarray(X_stage2, dtype=float)])
    return fit_glm_binary(y2, X2, link="logit")
