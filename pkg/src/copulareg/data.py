"""Dataset loading, schema validation, and structured configuration files.

Input tables are CSV with a header row; column names are matched
case-sensitively against the analysis configuration.  Exactly two tokens
mean missing: the empty field and ``NA``.  Validation gathers every
violation before aborting, so a bad file is diagnosed in one pass.

Row accounting for each prepared model frame satisfies

    rows_in = rows_used + rows_dropped_missing + rows_dropped_invalid

where ``rows_dropped_missing`` counts rows whose outcome is missing (the
left-censored rule: the outcome is unknown, the row cannot inform the
fit) and ``rows_dropped_invalid`` counts rows with a missing treatment
or covariate entry (complete-case policy).

Configuration and scenario files are YAML mappings with nested sections;
unknown keys are rejected at every level.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
import pandas as pd
import yaml

from .copulas import FAMILIES, ROTATIONS
from .margins import LINKS, MarginSpec
from .model import CopulaSpec, ModelSpec
from .simulate import SimScenario, make_scenario

__all__ = [
    "MISSING_TOKENS",
    "AnalysisConfig",
    "LoadReport",
    "SchemaError",
    "default_grid_combos",
    "default_link_pairs",
    "load_table",
    "parse_analysis_config",
    "parse_scenario_file",
    "prepare_model_frame",
    "template_spec",
]

#: the only field values read as missing (case-sensitive)
MISSING_TOKENS = ("", "NA")


class SchemaError(ValueError):
    """Dataset or configuration violates its schema.

    ``problems`` lists every violation found, not just the first.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__(
            "schema validation failed:\n  - " + "\n  - ".join(self.problems)
        )


class ConfigError(SchemaError):
    """A configuration file or option set is invalid.

    Split from SchemaError so callers can report configuration mistakes
    differently from datasets that break the schema.
    """


@dataclasses.dataclass(frozen=True)
class LoadReport:
    """Row-drop accounting for one prepared model frame."""

    rows_in: int
    rows_used: int
    rows_dropped_missing: int
    rows_dropped_invalid: int

    def __post_init__(self):
        total = self.rows_used + self.rows_dropped_missing + self.rows_dropped_invalid
        if total != self.rows_in:
            raise ValueError(
                f"row accounting broken: {self.rows_in} in, {total} accounted"
            )

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def default_link_pairs() -> tuple[tuple[str, str], ...]:
    """Every ordered pair of margin links."""
    return tuple((a, b) for a in LINKS for b in LINKS)


def default_grid_combos() -> tuple[tuple[str, int], ...]:
    """Families compared in the default model grid.

    Clayton enters through its 180-degree rotation (upper-tail
    association); Frank is available but not fitted unless asked for.
    """
    return (("gaussian", 0), ("student_t", 0), ("clayton", 180), ("joe", 0))


@dataclasses.dataclass(frozen=True)
class AnalysisConfig:
    """Column roles, value constraints, and model-grid layout for a CSV fit."""

    treatment: str
    outcome: str
    treatment_terms: tuple[str, ...] = ()
    treatment_smooths: tuple[str, ...] = ()
    outcome_terms: tuple[str, ...] = ()
    outcome_smooths: tuple[str, ...] = ()
    binary_columns: tuple[str, ...] = ()
    categorical_levels: tuple[tuple[str, tuple[str, ...]], ...] = ()
    nonnegative_columns: tuple[str, ...] = ()
    families: tuple[tuple[str, int], ...] = dataclasses.field(
        default_factory=default_grid_combos
    )
    link_pairs: tuple[tuple[str, str], ...] = dataclasses.field(
        default_factory=default_link_pairs
    )
    basis_dim: int = 10

    def model_columns(self) -> tuple[str, ...]:
        seen: list[str] = []
        for name in (
            (self.treatment, self.outcome)
            + self.treatment_terms
            + self.treatment_smooths
            + self.outcome_terms
            + self.outcome_smooths
        ):
            if name not in seen:
                seen.append(name)
        return tuple(seen)

    def categorical_map(self) -> dict[str, tuple[str, ...]]:
        return dict(self.categorical_levels)


def _check_config(cfg: AnalysisConfig) -> list[str]:
    problems = []
    if cfg.treatment == cfg.outcome:
        problems.append("treatment and outcome name the same column")
    for eq, terms, smooths in (
        ("treatment_equation", cfg.treatment_terms, cfg.treatment_smooths),
        ("outcome_equation", cfg.outcome_terms, cfg.outcome_smooths),
    ):
        overlap = set(terms) & set(smooths)
        if overlap:
            problems.append(
                f"{eq}: column(s) {sorted(overlap)} listed as both term and smooth"
            )
    for eq, cols in (
        ("treatment_equation", cfg.treatment_terms + cfg.treatment_smooths),
        ("outcome_equation", cfg.outcome_terms + cfg.outcome_smooths),
    ):
        if cfg.outcome in cols:
            problems.append(f"{eq}: outcome column {cfg.outcome!r} used as regressor")
        if cfg.treatment in cols:
            problems.append(
                f"{eq}: treatment column {cfg.treatment!r} must not be listed; "
                "it enters the outcome equation implicitly"
            )
    model_cols = set(cfg.model_columns())
    categorical = cfg.categorical_map()
    for role, cols in (
        ("binary", cfg.binary_columns),
        ("categorical", tuple(categorical)),
        ("nonnegative", cfg.nonnegative_columns),
    ):
        for col in cols:
            if col not in model_cols:
                problems.append(
                    f"columns.{role}: {col!r} is not a model column"
                )
    for col in set(cfg.treatment_smooths + cfg.outcome_smooths) & set(categorical):
        problems.append(f"categorical column {col!r} cannot be a smooth term")
    claimed = list(cfg.binary_columns) + list(categorical) + list(
        cfg.nonnegative_columns
    )
    dupes = sorted({c for c in claimed if claimed.count(c) > 1})
    if dupes:
        problems.append(f"column(s) {dupes} given more than one value constraint")
    for family, rotation in cfg.families:
        if family not in FAMILIES:
            problems.append(f"unknown copula family {family!r}")
        elif rotation not in ROTATIONS:
            problems.append(f"unsupported rotation {rotation} for {family!r}")
    for pair in cfg.link_pairs:
        for link in pair:
            if link not in LINKS:
                problems.append(f"unknown link {link!r}")
    if cfg.basis_dim < 4:
        problems.append("basis_dim must be at least 4")
    return problems


def load_table(csv_path) -> pd.DataFrame:
    """Read a CSV with the package's missing-value convention.

    Only the tokens in MISSING_TOKENS are treated as missing; pandas'
    wider default NA vocabulary (``null``, ``N/A``, ...) is disabled so
    stray sentinels surface as schema errors instead of silent holes.
    """
    return pd.read_csv(
        csv_path, keep_default_na=False, na_values=list(MISSING_TOKENS)
    )


def _rows_of(mask: pd.Series) -> str:
    rows = [str(i + 2) for i in np.flatnonzero(mask.to_numpy())]
    return "row(s) " + ", ".join(rows)  # +2: header line, 1-based file lines


def _coerce_numeric(series: pd.Series) -> tuple[pd.Series, pd.Series]:
    converted = pd.to_numeric(series, errors="coerce")
    bad = converted.isna() & series.notna()
    return converted, bad


def prepare_model_frame(
    frame: pd.DataFrame, config: AnalysisConfig
) -> tuple[pd.DataFrame, LoadReport]:
    """Validate a raw table and return the complete-case model frame.

    Every schema violation in the file is collected and raised as one
    SchemaError.  Rows with a missing outcome are dropped under the
    left-censored rule; rows missing a regressor are dropped as
    incomplete.  The returned report carries the accounting identity.
    """
    problems = _check_config(config)
    if problems:
        raise ConfigError(problems)

    categorical = config.categorical_map()
    needed = config.model_columns()
    missing_cols = [c for c in needed if c not in frame.columns]
    problems.extend(f"missing column {c!r}" for c in missing_cols)
    present = [c for c in needed if c in frame.columns]

    work = pd.DataFrame(index=frame.index)
    for col in present:
        series = frame[col]
        if col in categorical:
            levels = categorical[col]
            as_str = series.astype("string").str.strip()
            bad = series.notna() & ~as_str.isin(levels)
            if bad.any():
                problems.append(
                    f"column {col!r}: value(s) outside levels {list(levels)} "
                    f"at {_rows_of(bad)}"
                )
            work[col] = as_str
            continue
        converted, unparseable = _coerce_numeric(series)
        if unparseable.any():
            problems.append(
                f"column {col!r}: non-numeric value(s) at {_rows_of(unparseable)}"
            )
            work[col] = converted
            continue
        is_binary = (
            col in config.binary_columns
            or col in (config.treatment, config.outcome)
        )
        if is_binary:
            bad = converted.notna() & ~converted.isin((0.0, 1.0))
            if bad.any():
                problems.append(
                    f"column {col!r}: non-binary value(s) at {_rows_of(bad)}"
                )
        elif col in config.nonnegative_columns:
            bad = converted.notna() & (converted < 0.0)
            if bad.any():
                problems.append(
                    f"column {col!r}: negative value(s) at {_rows_of(bad)}"
                )
        work[col] = converted.astype(float)

    if config.outcome in frame.columns and frame[config.outcome].isna().all():
        problems.append(
            f"column {config.outcome!r} has no observed values (all missing)"
        )
    if problems:
        raise SchemaError(problems)

    regressors = [c for c in present if c != config.outcome]
    rows_in = len(work)
    outcome_missing = work[config.outcome].isna()
    survivors = work.loc[~outcome_missing]
    regressor_missing = survivors[regressors].isna().any(axis=1)
    used = survivors.loc[~regressor_missing].reset_index(drop=True)
    report = LoadReport(
        rows_in=rows_in,
        rows_used=len(used),
        rows_dropped_missing=int(outcome_missing.sum()),
        rows_dropped_invalid=int(regressor_missing.sum()),
    )
    return used, report


def template_spec(config: AnalysisConfig) -> ModelSpec:
    """Base model specification the grid varies links and families over."""
    return ModelSpec(
        treatment=config.treatment,
        outcome=config.outcome,
        treatment_margin=MarginSpec(
            parametric_terms=config.treatment_terms,
            smooth_terms=config.treatment_smooths,
            link="probit",
        ),
        outcome_margin=MarginSpec(
            parametric_terms=config.outcome_terms,
            smooth_terms=config.outcome_smooths,
            includes_treatment=True,
            link="probit",
        ),
        copula=CopulaSpec("gaussian"),
        basis_dim=config.basis_dim,
    )


def _require_mapping(node, where: str) -> dict:
    if node is None:
        return {}
    if not isinstance(node, dict):
        raise ConfigError([f"{where}: expected a mapping"])
    return node


def _reject_unknown(node: dict, allowed, where: str, problems: list[str]):
    unknown = sorted(set(node) - set(allowed))
    problems.extend(f"{where}: unknown key {k!r}" for k in unknown)


def _str_tuple(node, where: str, problems: list[str]) -> tuple[str, ...]:
    if node is None:
        return ()
    if not isinstance(node, (list, tuple)) or not all(
        isinstance(x, str) for x in node
    ):
        problems.append(f"{where}: expected a list of column names")
        return ()
    return tuple(node)


def parse_family(label: str) -> tuple[str, int]:
    """``'clayton@180'`` -> ('clayton', 180); no suffix means rotation 0."""
    name, _, rot = label.partition("@")
    rotation = int(rot) if rot else 0
    return name.strip(), rotation


def parse_link_pair(label: str) -> tuple[str, str]:
    """``'probit-logit'`` -> ('probit', 'logit'); one name means both."""
    first, sep, second = label.partition("-")
    if not sep:
        return first.strip(), first.strip()
    return first.strip(), second.strip()


def parse_analysis_config(path) -> AnalysisConfig:
    """Parse the YAML analysis configuration, rejecting unknown keys."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    doc = _require_mapping(doc, "config")
    problems: list[str] = []
    _reject_unknown(doc, ("model", "columns", "grid"), "config", problems)

    model = _require_mapping(doc.get("model"), "model")
    _reject_unknown(
        model,
        ("treatment", "outcome", "treatment_equation", "outcome_equation"),
        "model",
        problems,
    )
    treatment = model.get("treatment")
    outcome = model.get("outcome")
    for field, value in (("treatment", treatment), ("outcome", outcome)):
        if not isinstance(value, str) or not value:
            problems.append(f"model.{field}: a column name is required")

    equations = {}
    for eq in ("treatment_equation", "outcome_equation"):
        node = _require_mapping(model.get(eq), f"model.{eq}")
        _reject_unknown(node, ("terms", "smooths"), f"model.{eq}", problems)
        equations[eq] = (
            _str_tuple(node.get("terms"), f"model.{eq}.terms", problems),
            _str_tuple(node.get("smooths"), f"model.{eq}.smooths", problems),
        )

    columns = _require_mapping(doc.get("columns"), "columns")
    _reject_unknown(
        columns, ("binary", "categorical", "nonnegative"), "columns", problems
    )
    binary = _str_tuple(columns.get("binary"), "columns.binary", problems)
    nonneg = _str_tuple(columns.get("nonnegative"), "columns.nonnegative", problems)
    cat_node = _require_mapping(columns.get("categorical"), "columns.categorical")
    categorical = []
    for col, levels in cat_node.items():
        if not isinstance(levels, (list, tuple)) or len(levels) < 2:
            problems.append(
                f"columns.categorical.{col}: at least two levels required"
            )
            continue
        categorical.append((str(col), tuple(str(lv) for lv in levels)))

    grid = _require_mapping(doc.get("grid"), "grid")
    _reject_unknown(grid, ("families", "links", "basis_dim"), "grid", problems)
    fam_labels = _str_tuple(grid.get("families"), "grid.families", problems)
    link_labels = _str_tuple(grid.get("links"), "grid.links", problems)
    families = (
        tuple(parse_family(lb) for lb in fam_labels)
        if fam_labels
        else default_grid_combos()
    )
    link_pairs = (
        tuple(parse_link_pair(lb) for lb in link_labels)
        if link_labels
        else default_link_pairs()
    )
    basis_dim = grid.get("basis_dim", 10)
    if not isinstance(basis_dim, int):
        problems.append("grid.basis_dim: expected an integer")
        basis_dim = 10

    if problems:
        raise ConfigError(problems)
    config = AnalysisConfig(
        treatment=treatment,
        outcome=outcome,
        treatment_terms=equations["treatment_equation"][0],
        treatment_smooths=equations["treatment_equation"][1],
        outcome_terms=equations["outcome_equation"][0],
        outcome_smooths=equations["outcome_equation"][1],
        binary_columns=binary,
        categorical_levels=tuple(categorical),
        nonnegative_columns=nonneg,
        families=families,
        link_pairs=link_pairs,
        basis_dim=basis_dim,
    )
    problems = _check_config(config)
    if problems:
        raise ConfigError(problems)
    return config


_SCENARIO_KEYS = (
    "specification",
    "n",
    "replicates",
    "rho",
    "censoring_target",
    "cutoff_quantiles",
    "seed",
    "beta",
    "gamma",
)


def parse_scenario_file(path) -> SimScenario:
    """Parse a YAML scenario file holding exactly the scenario fields."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    doc = _require_mapping(doc, "scenario")
    problems: list[str] = []
    _reject_unknown(doc, _SCENARIO_KEYS, "scenario", problems)
    if problems:
        raise ConfigError(problems)
    kwargs = {}
    for key in _SCENARIO_KEYS:
        if key in doc and doc[key] is not None:
            value = doc[key]
            if key in ("cutoff_quantiles", "beta", "gamma"):
                value = tuple(float(v) for v in value)
            kwargs[key] = value
    specification = kwargs.pop("specification", "full")
    try:
        scenario = make_scenario(specification, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError([f"scenario: {exc}"]) from exc
    _validate_scenario(scenario)
    return scenario


def _validate_scenario(scenario: SimScenario):
    problems = []
    if scenario.n < 20:
        problems.append("scenario: n must be at least 20")
    if scenario.replicates < 1:
        problems.append("scenario: replicates must be positive")
    if not -1.0 < scenario.rho < 1.0:
        problems.append("scenario: rho must lie in (-1, 1)")
    if not 0.0 <= scenario.censoring_target <= 0.9:
        problems.append("scenario: censoring_target must lie in [0, 0.9]")
    if not scenario.cutoff_quantiles or not all(
        0.0 < q < 1.0 for q in scenario.cutoff_quantiles
    ):
        problems.append("scenario: cutoff quantiles must lie in (0, 1)")
    if any(
        not math.isfinite(v) for v in scenario.beta + scenario.gamma
    ):
        problems.append("scenario: coefficients must be finite")
    if problems:
        raise ConfigError(problems)
