"""Two-equation joint model: design assembly, likelihood, and fitting.

The model couples a binary treatment equation and a binary outcome
equation (the outcome equation carrying the observed treatment with a
free coefficient) through a parametric copula on the two marginal
success probabilities.  Each observation contributes the log of one of
the four joint configuration probabilities

    k11 = C_theta(p1, p2),   k10 = p1 - k11,
    k01 = p2 - k11,          k00 = 1 - p1 - p2 + k11,

selected by its (y1, y2) cell.  Smooth covariate effects enter through
penalized spline blocks; fitting maximizes the penalized log-likelihood
with trust-region Newton on the unconstrained parameter vector (the
copula parameter mapped through its reparameterization), and smoothing
parameters are chosen by AIC over a grid with golden-section refinement.
"""

from __future__ import annotations

import dataclasses
import math
import warnings

import numpy as np
import pandas as pd
from scipy import linalg

from .copulas import (
    UNIT_EPS,
    CopulaSpec,
    ThetaReparam,
    copula_cdf,
    copula_partials,
    theta_reparam,
)
from .margins import MarginSpec, link_cdf, link_pdf
from .smooths import DEFAULT_BASIS_DIM, SmoothTerm, basis_rows, build_basis
from .optimize import OptimResult, trust_region_minimize

__all__ = [
    "COEF_CAP",
    "LOG_CLAMP",
    "DesignInfo",
    "FittedJointModel",
    "JointConfigProbs",
    "ModelSpec",
    "assemble_design",
    "equation_design",
    "fit",
    "information_criteria",
    "joint_config_probs",
    "joint_loglik",
    "joint_loglik_grad",
]

#: probabilities below exp(LOG_CLAMP) contribute this constant log-likelihood
LOG_CLAMP = math.log(1e-300)

#: separation guard on the latent scale
COEF_CAP = 15.0

# working box for the unconstrained copula parameter; tanh saturates to
# exactly +-1.0 in float64 beyond |t| ~ 19, which would leave the open
# parameter domain
_TSTAR_BOX = {
    "gaussian": 18.0,
    "student_t": 18.0,
    "clayton": 30.0,
    "joe": 30.0,
    "frank": 5000.0,
}

_LAMBDA_GRID = tuple(float(e) for e in range(-4, 5))  # log10 scale


@dataclasses.dataclass(frozen=True)
class ModelSpec:
    """Joint model structure: two margins, their responses, one copula.

    ``treatment`` names the binary response of the treatment equation and
    the column that enters the outcome equation; ``outcome`` names the
    outcome equation's binary response.
    """

    treatment: str
    outcome: str
    treatment_margin: MarginSpec
    outcome_margin: MarginSpec
    copula: CopulaSpec
    basis_dim: int = DEFAULT_BASIS_DIM

    def __post_init__(self) -> None:
        if self.treatment == self.outcome:
            raise ValueError("treatment and outcome must be different columns")
        if self.treatment_margin.includes_treatment:
            raise ValueError("the treatment equation cannot include the treatment indicator")
        if not self.outcome_margin.includes_treatment:
            raise ValueError("the outcome margin must set includes_treatment=True")
        for margin in (self.treatment_margin, self.outcome_margin):
            if self.treatment in margin.parametric_terms or self.treatment in margin.smooth_terms:
                raise ValueError(
                    f"treatment column {self.treatment!r} may only enter through "
                    "includes_treatment, not as a covariate term"
                )


@dataclasses.dataclass(frozen=True)
class JointConfigProbs:
    """The four joint cell probabilities, clamped into the Frechet box.

    ``n_clamped`` counts entries where numerical error pushed k11 outside
    [max(0, p1+p2-1), min(p1, p2)] and a clamp was applied.
    """

    k11: np.ndarray
    k10: np.ndarray
    k01: np.ndarray
    k00: np.ndarray
    n_clamped: int


@dataclasses.dataclass(frozen=True)
class _EquationDesign:
    X: np.ndarray
    names: tuple[str, ...]
    smooths: tuple[SmoothTerm, ...]
    smooth_slices: tuple[tuple[int, int], ...]
    n_unpenalized: int


@dataclasses.dataclass(frozen=True)
class DesignInfo:
    """Assembled matrices and metadata for both equations."""

    treatment_eq: _EquationDesign
    outcome_eq: _EquationDesign
    y1: np.ndarray
    y2: np.ndarray
    encoders: dict
    notes: tuple[str, ...]

    @property
    def n(self) -> int:
        return self.y1.shape[0]


def _validate_binary(name: str, values: np.ndarray, *, response: bool) -> np.ndarray:
    arr = np.asarray(values)
    uniq = np.unique(arr[~pd.isna(arr)])
    if not np.all(np.isin(uniq, [0, 1])) or pd.isna(arr).any():
        raise ValueError(f"column {name!r} must be coded {{0,1}} with no missing values")
    out = arr.astype(float)
    if response and (out.sum() == 0 or out.sum() == out.shape[0]):
        raise ValueError(f"response {name!r} is all-zero or all-one; cannot fit")
    return out


def _encode_column(
    data: pd.DataFrame, col: str, encoders: dict
) -> tuple[np.ndarray, list[str]]:
    series = data[col]
    if pd.api.types.is_numeric_dtype(series) or pd.api.types.is_bool_dtype(series):
        vals = series.to_numpy(dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"column {col!r} contains missing or non-finite values")
        return vals[:, None], [col]
    # categorical: reference-coded indicators; 'Positive' is the reference
    # when present, otherwise the first level in sorted order
    levels = sorted(str(x) for x in series.dropna().unique())
    if series.isna().any():
        raise ValueError(f"column {col!r} contains missing values")
    if col in encoders:
        reference, known = encoders[col]
        unseen = set(levels) - set(known) - {reference}
        if unseen:
            raise ValueError(f"column {col!r} has unseen level(s) {sorted(unseen)}")
    else:
        reference = "Positive" if "Positive" in levels else levels[0]
        known = tuple(lv for lv in levels if lv != reference)
        encoders[col] = (reference, known)
    reference, known = encoders[col]
    as_str = series.astype(str).to_numpy()
    cols = [(as_str == lv).astype(float) for lv in known]
    names = [f"{col}[{lv}]" for lv in known]
    return np.column_stack(cols) if cols else np.empty((len(series), 0)), names


def _build_equation(
    data: pd.DataFrame,
    margin: MarginSpec,
    treatment: str | None,
    encoders: dict,
    basis_dim: int,
    smooth_store: dict | None,
    collected_notes: list[str],
) -> _EquationDesign:
    n = len(data)
    blocks = [np.ones((n, 1))]
    names: list[str] = ["intercept"]
    for col in margin.parametric_terms:
        block, block_names = _encode_column(data, col, encoders)
        blocks.append(block)
        names.extend(block_names)
    if treatment is not None:
        blocks.append(_validate_binary(treatment, data[treatment].to_numpy(), response=False)[:, None])
        names.append(treatment)
    n_unpenalized = sum(b.shape[1] for b in blocks)
    smooths: list[SmoothTerm] = []
    slices: list[tuple[int, int]] = []
    offset = n_unpenalized
    for col in margin.smooth_terms:
        x = data[col].to_numpy(dtype=float)
        if not np.all(np.isfinite(x)):
            raise ValueError(f"column {col!r} contains missing or non-finite values")
        if smooth_store is not None and col in smooth_store:
            term = smooth_store[col]
            block = basis_rows(term, x)
        else:
            with warnings.catch_warnings(record=True) as rec:
                warnings.simplefilter("always")
                term = build_basis(x, basis_dim, covariate=col)
            collected_notes.extend(str(w.message) for w in rec)
            block = term.basis_matrix
            if smooth_store is not None:
                smooth_store[col] = term
        blocks.append(block)
        names.extend(f"s({col}).{i + 1}" for i in range(term.n_coef))
        smooths.append(term)
        slices.append((offset, offset + term.n_coef))
        offset += term.n_coef
    X = np.hstack(blocks)
    return _EquationDesign(
        X=X,
        names=tuple(names),
        smooths=tuple(smooths),
        smooth_slices=tuple(slices),
        n_unpenalized=n_unpenalized,
    )


def assemble_design(data: pd.DataFrame, spec: ModelSpec) -> DesignInfo:
    """Build both equations' design matrices from a complete dataset.

    The outcome design carries the observed treatment column; categorical
    covariates expand to reference-coded indicators (reference 'Positive'
    when that level exists).  Missing columns, non-binary responses, and
    one-class responses are rejected.
    """
    if not isinstance(data, pd.DataFrame):
        raise TypeError("data must be a pandas DataFrame")
    needed = {spec.treatment, spec.outcome}
    for margin in (spec.treatment_margin, spec.outcome_margin):
        needed |= set(margin.parametric_terms) | set(margin.smooth_terms)
    missing = sorted(needed - set(data.columns))
    if missing:
        raise ValueError(f"dataset is missing column(s): {missing}")
    y1 = _validate_binary(spec.treatment, data[spec.treatment].to_numpy(), response=True)
    y2 = _validate_binary(spec.outcome, data[spec.outcome].to_numpy(), response=True)
    encoders: dict = {}
    notes: list[str] = []
    eq1 = _build_equation(
        data, spec.treatment_margin, None, encoders, spec.basis_dim, None, notes
    )
    eq2 = _build_equation(
        data, spec.outcome_margin, spec.treatment, encoders, spec.basis_dim, None, notes
    )
    return DesignInfo(
        treatment_eq=eq1,
        outcome_eq=eq2,
        y1=y1,
        y2=y2,
        encoders=encoders,
        notes=tuple(notes),
    )


def equation_design(
    design: DesignInfo,
    spec: ModelSpec,
    data: pd.DataFrame,
    equation: str,
    treatment_override: float | None = None,
) -> np.ndarray:
    """Design matrix for new data using the training bases and encoders.

    ``treatment_override`` replaces the observed treatment column in the
    outcome equation with a constant (0 or 1), which is how potential-
    outcome predictors are formed.
    """
    if equation not in ("treatment", "outcome"):
        raise ValueError("equation must be 'treatment' or 'outcome'")
    margin = spec.treatment_margin if equation == "treatment" else spec.outcome_margin
    trained = design.treatment_eq if equation == "treatment" else design.outcome_eq
    n = len(data)
    blocks = [np.ones((n, 1))]
    encoders = dict(design.encoders)
    for col in margin.parametric_terms:
        block, _ = _encode_column(data, col, encoders)
        blocks.append(block)
    if equation == "outcome":
        if treatment_override is None:
            col = _validate_binary(spec.treatment, data[spec.treatment].to_numpy(), response=False)
        else:
            if treatment_override not in (0.0, 1.0):
                raise ValueError("treatment_override must be 0 or 1")
            col = np.full(n, float(treatment_override))
        blocks.append(col[:, None])
    for col, term in zip(margin.smooth_terms, trained.smooths):
        x = data[col].to_numpy(dtype=float)
        blocks.append(basis_rows(term, x))
    return np.hstack(blocks)


def joint_config_probs(p1, p2, copula: CopulaSpec) -> JointConfigProbs:
    """Four joint cell probabilities for marginal success probabilities.

    Numerical Frechet violations are clamped into the admissible box and
    counted.
    """
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    if np.any((p1 <= 0.0) | (p1 >= 1.0)) or np.any((p2 <= 0.0) | (p2 >= 1.0)):
        raise ValueError("p1, p2 must lie strictly inside (0, 1)")
    c = np.asarray(copula_cdf(p1, p2, copula))
    lo = np.maximum(p1 + p2 - 1.0, 0.0)
    hi = np.minimum(p1, p2)
    k11 = np.clip(c, lo, hi)
    n_clamped = int(np.sum(k11 != c))
    return JointConfigProbs(
        k11=k11,
        k10=p1 - k11,
        k01=p2 - k11,
        k00=1.0 - p1 - p2 + k11,
        n_clamped=n_clamped,
    )


# ---------------------------------------------------------------------------
# likelihood core


def _clip_tstar(family: str, t: float) -> tuple[float, bool]:
    box = _TSTAR_BOX[family]
    if t > box:
        return box, False
    if t < -box:
        return -box, False
    return t, True


@dataclasses.dataclass
class _LikelihoodParts:
    penalized: float
    loglik: float
    grad: np.ndarray
    clamp_count: int
    frechet_count: int
    theta: float


class _Objective:
    """Penalized joint log-likelihood bound to one assembled design.

    Parameter layout: [treatment-eq coefficients | outcome-eq coefficients
    | unconstrained copula parameter], the last entry absent when theta is
    fixed.
    """

    def __init__(
        self,
        design: DesignInfo,
        spec: ModelSpec,
        lambdas: np.ndarray,
        fix_theta: float | None = None,
    ):
        self.design = design
        self.spec = spec
        self.fix_theta = fix_theta
        self.p1_dim = design.treatment_eq.X.shape[1]
        self.p2_dim = design.outcome_eq.X.shape[1]
        self.n_coef = self.p1_dim + self.p2_dim
        self.n_params = self.n_coef + (0 if fix_theta is not None else 1)
        self.reparam: ThetaReparam = theta_reparam(spec.copula.family)
        self.lambdas = np.asarray(lambdas, dtype=float)
        # penalty blocks over the stacked coefficient vector
        blocks: list[tuple[int, int, np.ndarray]] = []
        for eq_off, eq in ((0, design.treatment_eq), (self.p1_dim, design.outcome_eq)):
            for (a, b), term in zip(eq.smooth_slices, eq.smooths):
                blocks.append((eq_off + a, eq_off + b, term.penalty))
        if len(blocks) != self.lambdas.shape[0]:
            raise ValueError(
                f"expected {len(blocks)} smoothing parameters, got {self.lambdas.shape[0]}"
            )
        self.penalty_blocks = blocks

    def penalty_matrix(self) -> np.ndarray:
        S = np.zeros((self.n_params, self.n_params))
        for lam, (a, b, pen) in zip(self.lambdas, self.penalty_blocks):
            S[a:b, a:b] += lam * pen
        return S

    def theta_of(self, z: np.ndarray) -> float:
        if self.fix_theta is not None:
            return float(self.fix_theta)
        t, _ = _clip_tstar(self.spec.copula.family, float(z[self.n_coef]))
        return float(self.reparam.from_unconstrained(t))

    def parts(self, z: np.ndarray) -> _LikelihoodParts:
        d = self.design
        a1 = z[: self.p1_dim]
        a2 = z[self.p1_dim : self.n_coef]
        eta1 = d.treatment_eq.X @ a1
        eta2 = d.outcome_eq.X @ a2
        link1 = self.spec.treatment_margin.link
        link2 = self.spec.outcome_margin.link
        p1 = np.asarray(link_cdf(link1, eta1))
        p2 = np.asarray(link_cdf(link2, eta2))
        u = np.clip(p1, UNIT_EPS, 1.0 - UNIT_EPS)
        v = np.clip(p2, UNIT_EPS, 1.0 - UNIT_EPS)
        active_u = (p1 > UNIT_EPS) & (p1 < 1.0 - UNIT_EPS)
        active_v = (p2 > UNIT_EPS) & (p2 < 1.0 - UNIT_EPS)

        if self.fix_theta is not None:
            theta = float(self.fix_theta)
            in_box = False
            dtheta_dt = 0.0
        else:
            t_raw = float(z[self.n_coef])
            t, in_box = _clip_tstar(self.spec.copula.family, t_raw)
            theta = float(self.reparam.from_unconstrained(t))
            dtheta_dt = self.reparam.dtheta(t) if in_box else 0.0
        if self.spec.copula.family == "frank" and theta == 0.0:
            theta = 1e-12  # exact zero is outside the domain; the series
            # branch makes this indistinguishable from independence
        cspec = self.spec.copula.with_theta(theta)

        cells = joint_config_probs(u, v, cspec)
        cu, cv, ct = copula_partials(u, v, cspec)
        cu = np.asarray(cu)
        cv = np.asarray(cv)
        ct = np.asarray(ct)

        y1 = d.y1.astype(bool)
        y2 = d.y2.astype(bool)
        kcell = np.where(
            y1,
            np.where(y2, cells.k11, cells.k10),
            np.where(y2, cells.k01, cells.k00),
        )
        clamped = kcell < 1e-300
        loglik = float(np.sum(np.where(clamped, LOG_CLAMP, np.log(np.maximum(kcell, 1e-300)))))

        ksafe = np.maximum(kcell, 1e-300)
        w_u = np.where(
            y1,
            np.where(y2, cu, 1.0 - cu),
            np.where(y2, -cu, -(1.0 - cu)),
        ) / ksafe
        w_v = np.where(
            y1,
            np.where(y2, cv, -cv),
            np.where(y2, 1.0 - cv, -(1.0 - cv)),
        ) / ksafe
        w_t = np.where(y1 == y2, ct, -ct) / ksafe
        dead = clamped  # clamped rows contribute a constant, so zero weight
        w_u = np.where(dead, 0.0, w_u)
        w_v = np.where(dead, 0.0, w_v)
        w_t = np.where(dead, 0.0, w_t)

        pdf1 = np.asarray(link_pdf(link1, eta1)) * active_u
        pdf2 = np.asarray(link_pdf(link2, eta2)) * active_v
        grad = np.empty(self.n_params)
        grad[: self.p1_dim] = d.treatment_eq.X.T @ (w_u * pdf1)
        grad[self.p1_dim : self.n_coef] = d.outcome_eq.X.T @ (w_v * pdf2)
        if self.fix_theta is None:
            grad[self.n_coef] = float(np.sum(w_t)) * dtheta_dt

        penalty = 0.0
        for lam, (a, b, pen) in zip(self.lambdas, self.penalty_blocks):
            beta = z[a:b]
            sb = pen @ beta
            penalty += 0.5 * lam * float(beta @ sb)
            grad[a:b] -= lam * sb
        return _LikelihoodParts(
            penalized=loglik - penalty,
            loglik=loglik,
            grad=grad,
            clamp_count=int(np.sum(clamped)),
            frechet_count=cells.n_clamped,
            theta=theta,
        )

    def neg_value_grad(self, z: np.ndarray) -> tuple[float, np.ndarray]:
        parts = self.parts(z)
        return -parts.penalized, -parts.grad


def _stack_penalties(penalties) -> list[tuple[int, int, float, np.ndarray]]:
    out = []
    for start, stop, lam, S in penalties:
        S = np.asarray(S, dtype=float)
        if S.shape != (stop - start, stop - start):
            raise ValueError("penalty block shape does not match its slice")
        out.append((int(start), int(stop), float(lam), S))
    return out


def joint_loglik(
    params, X1, X2, y1, y2, copula: CopulaSpec, *, penalties=(), fix_theta=None, link1="probit", link2="probit"
) -> float:
    """Penalized joint log-likelihood at a stacked parameter vector.

    ``params`` is [treatment-eq coefs | outcome-eq coefs | unconstrained
    copula parameter], the last omitted when ``fix_theta`` is given.
    With no penalties this is the plain log-likelihood; cell probabilities
    below 1e-300 contribute log(1e-300) and are counted internally.
    """
    parts = _loglik_links(params, X1, X2, y1, y2, copula, penalties, fix_theta, link1, link2)
    return parts.penalized


def joint_loglik_grad(
    params, X1, X2, y1, y2, copula: CopulaSpec, *, penalties=(), fix_theta=None, link1="probit", link2="probit"
) -> np.ndarray:
    """Analytic gradient of :func:`joint_loglik` (same layout as params)."""
    parts = _loglik_links(params, X1, X2, y1, y2, copula, penalties, fix_theta, link1, link2)
    return parts.grad


def _loglik_links(params, X1, X2, y1, y2, copula, penalties, fix_theta, link1, link2):
    params = np.asarray(params, dtype=float)
    X1 = np.asarray(X1, dtype=float)
    X2 = np.asarray(X2, dtype=float)
    p1_dim = X1.shape[1]
    p2_dim = X2.shape[1]
    expected = p1_dim + p2_dim + (0 if fix_theta is not None else 1)
    if params.shape[0] != expected:
        raise ValueError(f"params length {params.shape[0]} != expected {expected}")
    eq1 = _EquationDesign(X1, tuple(f"x1_{i}" for i in range(p1_dim)), (), (), p1_dim)
    eq2 = _EquationDesign(X2, tuple(f"x2_{i}" for i in range(p2_dim)), (), (), p2_dim)
    design = DesignInfo(
        treatment_eq=eq1,
        outcome_eq=eq2,
        y1=np.asarray(y1, dtype=float),
        y2=np.asarray(y2, dtype=float),
        encoders={},
        notes=(),
    )
    mspec = ModelSpec(
        treatment="__y1__",
        outcome="__y2__",
        treatment_margin=MarginSpec(link=link1),
        outcome_margin=MarginSpec(link=link2, includes_treatment=True),
        copula=copula,
    )
    obj = _Objective(design, mspec, np.empty(0), fix_theta=fix_theta)
    parts = obj.parts(params)
    blocks = _stack_penalties(penalties)
    pen = 0.0
    grad = parts.grad.copy()
    for a, b, lam, S in blocks:
        beta = params[a:b]
        sb = S @ beta
        pen += 0.5 * lam * float(beta @ sb)
        grad[a:b] -= lam * sb
    return dataclasses.replace(parts, penalized=parts.loglik - pen, grad=grad)


# ---------------------------------------------------------------------------
# fitting


@dataclasses.dataclass(frozen=True)
class FittedJointModel:
    """Converged (or diagnosed) penalized-likelihood fit."""

    spec: ModelSpec
    design: DesignInfo
    coefficients: np.ndarray
    coef_treatment: np.ndarray
    coef_outcome: np.ndarray
    theta: float
    tstar: float | None
    covariance: np.ndarray
    loglik: float
    penalized_loglik: float
    edf_total: float
    edf_per_smooth: dict
    aic: float
    bic: float
    lambdas: np.ndarray
    converged: bool
    iterations: int
    gradient_norm: float
    clamp_count: int
    frechet_count: int
    separation: bool
    objective_history: tuple[float, ...]
    message: str

    @property
    def n_obs(self) -> int:
        return self.design.n

    @property
    def gamma(self) -> float:
        """Treatment coefficient in the outcome equation."""
        idx = self.design.outcome_eq.names.index(self.spec.treatment)
        return float(self.coef_outcome[idx])


def information_criteria(model: FittedJointModel) -> tuple[float, float]:
    """(AIC, BIC) of a fitted model."""
    return model.aic, model.bic


def _penalized_irls(X, y, link, S, max_iter=50):
    """Penalized Fisher scoring for one binary margin (starting values)."""
    n, p = X.shape
    beta = np.zeros(p)
    for _ in range(max_iter):
        eta = X @ beta
        mu = np.clip(np.asarray(link_cdf(link, eta)), 1e-10, 1.0 - 1e-10)
        dens = np.maximum(np.asarray(link_pdf(link, eta)), 1e-10)
        w = dens * dens / (mu * (1.0 - mu))
        z = eta + (y - mu) / dens
        A = X.T @ (w[:, None] * X) + S
        try:
            new = linalg.solve(A, X.T @ (w * z), assume_a="pos")
        except linalg.LinAlgError:
            new = linalg.lstsq(A, X.T @ (w * z))[0]
        if not np.all(np.isfinite(new)):
            break
        step = new - beta
        beta = new
        if np.max(np.abs(step)) < 1e-8:
            break
    return np.clip(beta, -COEF_CAP, COEF_CAP)


def _start_values(design: DesignInfo, spec: ModelSpec, obj: _Objective) -> np.ndarray:
    S_full = obj.penalty_matrix()
    p1 = obj.p1_dim
    S1 = S_full[:p1, :p1]
    S2 = S_full[p1 : obj.n_coef, p1 : obj.n_coef]
    a1 = _penalized_irls(design.treatment_eq.X, design.y1, spec.treatment_margin.link, S1)
    a2 = _penalized_irls(design.outcome_eq.X, design.y2, spec.outcome_margin.link, S2)
    z0 = np.concatenate([a1, a2, [0.0]] if obj.fix_theta is None else [a1, a2])
    if obj.fix_theta is None and spec.copula.family in ("clayton", "joe"):
        # these families are independent only in the limit t -> -inf; start
        # at weak positive dependence instead of the boundary
        z0[-1] = obj.reparam.to_unconstrained(
            1.05 if spec.copula.family == "joe" else 0.05
        )
    return z0


def _edf_blocks(obj: _Objective, H_pen: np.ndarray) -> tuple[float, dict, np.ndarray]:
    S_full = obj.penalty_matrix()
    H_unpen = H_pen - S_full
    try:
        with warnings.catch_warnings():
            # extreme lambdas make the penalized information ill-conditioned;
            # the block traces stay accurate (the huge-lambda edf -> 1 path)
            warnings.simplefilter("ignore", linalg.LinAlgWarning)
            E = linalg.solve(H_pen, H_unpen, assume_a="sym")
    except linalg.LinAlgError:
        E = linalg.lstsq(H_pen, H_unpen)[0]
    edf_per: dict = {}
    smooth_edf_sum = 0.0
    idx = 0
    labels = []
    for eq_name, eq, eq_off in (
        ("treatment", obj.design.treatment_eq, 0),
        ("outcome", obj.design.outcome_eq, obj.p1_dim),
    ):
        for (a, b), term in zip(eq.smooth_slices, eq.smooths):
            block = E[eq_off + a : eq_off + b, eq_off + a : eq_off + b]
            edf = float(np.trace(block))
            edf = min(max(edf, 1.0), float(term.n_coef))
            edf_per[f"{eq_name}:{term.covariate}"] = edf
            smooth_edf_sum += edf
            labels.append((idx, eq_name, term.covariate))
            idx += 1
    n_unpen = obj.design.treatment_eq.n_unpenalized + obj.design.outcome_eq.n_unpenalized
    edf_total = n_unpen + smooth_edf_sum + (0.0 if obj.fix_theta is not None else 1.0)
    return edf_total, edf_per, S_full


def _fit_once(
    design: DesignInfo,
    spec: ModelSpec,
    lambdas: np.ndarray,
    fix_theta: float | None,
    z0: np.ndarray,
    max_iter: int,
) -> tuple[OptimResult, _Objective]:
    obj = _Objective(design, spec, lambdas, fix_theta=fix_theta)
    res = trust_region_minimize(
        obj.neg_value_grad,
        z0,
        max_iter=max_iter,
        grad_tol=1e-6,
        rel_obj_tol=1e-9,
        init_radius=1.0,
    )
    return res, obj


def _aic_of(res: OptimResult, obj: _Objective) -> float:
    parts = obj.parts(res.x)
    edf_total, _, _ = _edf_blocks(obj, res.hessian)
    return -2.0 * parts.loglik + 2.0 * edf_total


def _golden_refine(score_fn, lo: float, hi: float, tol: float = 0.05) -> float:
    """Golden-section minimization of score_fn over [lo, hi] (log10 scale)."""
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc = score_fn(c)
    fd = score_fn(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = score_fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = score_fn(d)
    return (a + b) / 2.0


def fit(
    spec: ModelSpec,
    data: pd.DataFrame,
    *,
    lambdas=None,
    fix_theta: float | None = None,
    max_iter: int = 200,
) -> FittedJointModel:
    """Penalized maximum-likelihood fit of the joint model.

    Smoothing parameters are selected by AIC (coordinate descent over a
    log10 grid from -4 to 4 with golden-section refinement) unless
    ``lambdas`` pins them.  ``fix_theta`` freezes the copula parameter on
    its natural scale (no unconstrained entry in the parameter vector).
    """
    design = assemble_design(data, spec)
    n_smooth = len(design.treatment_eq.smooths) + len(design.outcome_eq.smooths)
    if lambdas is not None:
        lam_vec = np.asarray(lambdas, dtype=float)
        if lam_vec.shape != (n_smooth,):
            raise ValueError(f"lambdas must have length {n_smooth}")
        if np.any(lam_vec < 0.0):
            raise ValueError("lambdas must be nonnegative")
        select = False
    else:
        lam_vec = np.ones(n_smooth)
        select = n_smooth > 0

    obj0 = _Objective(design, spec, lam_vec, fix_theta=fix_theta)
    z_warm = _start_values(design, spec, obj0)

    if select:
        log_lams = np.zeros(n_smooth)
        cache_res, cache_obj = None, None
        for k in range(n_smooth):
            best_score = np.inf
            best_log = 0.0
            for lg in _LAMBDA_GRID:
                trial = log_lams.copy()
                trial[k] = lg
                res_k, obj_k = _fit_once(
                    design, spec, 10.0**trial, fix_theta, z_warm, max_iter
                )
                score = _aic_of(res_k, obj_k)
                if np.isfinite(score) and score < best_score:
                    best_score = score
                    best_log = lg
                    z_warm = res_k.x
                    cache_res, cache_obj = res_k, obj_k
            lo = max(best_log - 1.0, _LAMBDA_GRID[0])
            hi = min(best_log + 1.0, _LAMBDA_GRID[-1])

            def score_at(lg: float) -> float:
                nonlocal z_warm, cache_res, cache_obj
                trial = log_lams.copy()
                trial[k] = lg
                res_g, obj_g = _fit_once(
                    design, spec, 10.0**trial, fix_theta, z_warm, max_iter
                )
                score = _aic_of(res_g, obj_g)
                if np.isfinite(score):
                    z_warm = res_g.x
                    cache_res, cache_obj = res_g, obj_g
                return score

            log_lams[k] = _golden_refine(score_at, lo, hi)
            score_at(log_lams[k])
        lam_vec = 10.0**log_lams

    res, obj = _fit_once(design, spec, lam_vec, fix_theta, z_warm, max_iter)
    coef = res.x.copy()
    separation = bool(np.any(np.abs(coef[: obj.n_coef]) > COEF_CAP))
    if separation:
        warnings.warn(
            "possible separation: coefficient(s) beyond +-15 on the latent "
            "scale were capped"
        )
        coef[: obj.n_coef] = np.clip(coef[: obj.n_coef], -COEF_CAP, COEF_CAP)
    parts = obj.parts(coef)
    H_pen = (res.hessian + res.hessian.T) / 2.0
    edf_total, edf_per, _ = _edf_blocks(obj, H_pen)
    try:
        cov = linalg.inv(H_pen)
    except linalg.LinAlgError:
        cov = linalg.pinv(H_pen)
    cov = (cov + cov.T) / 2.0
    n = design.n
    aic = -2.0 * parts.loglik + 2.0 * edf_total
    bic = -2.0 * parts.loglik + math.log(n) * edf_total

    tstar = None if fix_theta is not None else float(coef[obj.n_coef])
    return FittedJointModel(
        spec=spec,
        design=design,
        coefficients=coef,
        coef_treatment=coef[: obj.p1_dim],
        coef_outcome=coef[obj.p1_dim : obj.n_coef],
        theta=parts.theta,
        tstar=tstar,
        covariance=cov,
        loglik=parts.loglik,
        penalized_loglik=parts.penalized,
        edf_total=float(edf_total),
        edf_per_smooth=edf_per,
        aic=float(aic),
        bic=float(bic),
        lambdas=lam_vec,
        converged=res.converged,
        iterations=res.iterations,
        gradient_norm=res.gradient_norm,
        clamp_count=parts.clamp_count,
        frechet_count=parts.frechet_count,
        separation=separation,
        objective_history=tuple(-h for h in res.history),
        message=res.message,
    )
