"""Joint copula regression for a binary endogenous treatment and a
dichotomized survival outcome, with penalized-spline margins, treatment
effect (SATE) inference, reference estimators, and simulation drivers."""

from .comparators import CoxFit, GlmFit, fit_2sps, fit_cox_ph, fit_glm_binary
from .copulas import (
    FAMILIES,
    ROTATIONS,
    CopulaSpec,
    copula_cdf,
    copula_partials,
    tau_to_theta,
    theta_to_tau,
)
from .effects import (
    DependenceSummary,
    ModelGridRow,
    SateEstimate,
    kendall_tau_ci,
    model_grid,
    sate,
    sate_ci,
)
from .margins import LINKS, MarginSpec, link_cdf, link_pdf
from .model import (
    DesignInfo,
    FittedJointModel,
    JointConfigProbs,
    ModelSpec,
    assemble_design,
    fit,
    joint_config_probs,
    joint_loglik,
    joint_loglik_grad,
)
from .smooths import SmoothTerm, build_basis

__version__ = "0.1.0"

__all__ = [
    "FAMILIES",
    "ROTATIONS",
    "CopulaSpec",
    "CoxFit",
    "DependenceSummary",
    "DesignInfo",
    "FittedJointModel",
    "GlmFit",
    "JointConfigProbs",
    "LINKS",
    "MarginSpec",
    "ModelGridRow",
    "ModelSpec",
    "SateEstimate",
    "SmoothTerm",
    "assemble_design",
    "build_basis",
    "copula_cdf",
    "copula_partials",
    "fit",
    "fit_2sps",
    "fit_cox_ph",
    "fit_glm_binary",
    "joint_config_probs",
    "joint_loglik",
    "joint_loglik_grad",
    "kendall_tau_ci",
    "model_grid",
    "sate",
    "sate_ci",
    "tau_to_theta",
    "theta_to_tau",
    "__version__",
]
