"""Command-line interface: simulation studies, CSV analysis, merged reports.

Exit codes: 0 success; 1 usage or configuration problems (including
unreadable input paths); 2 dataset or config schema violations; 3
numerical failure (no model could be fit, or an uncaught numeric error).
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import warnings

import numpy as np
from scipy import stats

from . import __version__
from .data import (
    SchemaError,
    load_table,
    parse_analysis_config,
    parse_family,
    parse_link_pair,
    parse_scenario_file,
    prepare_model_frame,
    template_spec,
)
from .model import fit
from .reporting import (
    build_manifest,
    write_manifest,
    write_report,
    write_table,
)
from .simulate import (
    SURVIVAL_X_COLUMNS,
    TRANSFORMED_COLUMN,
    TREATMENT_COLUMNS,
    make_scenario,
)
from .smooths import basis_rows

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SCHEMA = 2
EXIT_NUMERIC = 3


class _CliUsage(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; the package reserves
    # 2 for schema violations, so usage problems are rerouted to 1
    def error(self, message):
        raise _CliUsage(message)


def _covariate_mapping() -> dict:
    return {
        "treatment_equation_columns": [f"x{j + 1}" for j in TREATMENT_COLUMNS],
        "transformed_column": f"x{TRANSFORMED_COLUMN + 1}",
        "outcome_equation_columns": ["treat"]
        + [f"x{j + 1}" for j in SURVIVAL_X_COLUMNS],
        "two_stage_first_stage_columns": [
            f"x{j + 1}" for j in TREATMENT_COLUMNS
        ],
    }


def _load_scenario(args):
    if args.scenario:
        scenario = parse_scenario_file(args.scenario)
    else:
        scenario = make_scenario()
    if args.replicates is not None:
        if args.replicates < 1:
            raise _CliUsage("--replicates must be positive")
        scenario = dataclasses.replace(scenario, replicates=args.replicates)
    if args.seed is not None:
        scenario = dataclasses.replace(scenario, seed=args.seed)
    return scenario


def _print_written(paths):
    for p in paths:
        print(f"wrote {p}")


def _cmd_sim1(args) -> int:
    from .studies import run_sim1

    scenario = _load_scenario(args)
    study = run_sim1(scenario, jobs=args.jobs, n_oracle=args.oracle_draws)
    if all(row.n_used == 0 for row in study.rows):
        print("error: every replicate fit failed", file=sys.stderr)
        return EXIT_NUMERIC

    manifest = build_manifest(
        "sim1",
        dataclasses.asdict(scenario),
        scenario.seed,
        __version__,
        _covariate_mapping(),
    )
    meta = {
        "censoring_bound": study.censoring_bound,
        "n_oracle": study.n_oracle,
        "n_failed_total": sum(r.n_failed for r in study.rows),
    }
    csv_path, json_path = write_table(
        args.out, "sim1_curve", study.rows, manifest, meta=meta
    )
    paths = [csv_path, json_path, write_manifest(args.out, manifest)]
    if args.plot:
        figure = _plot_sim1(args.out, study)
        paths.append(figure)
    _print_written(paths)
    for row in study.rows:
        print(
            f"q={row.cutoff_quantile:.2f} effect {row.sate_mean:+.4f} "
            f"[{row.ci_low:+.4f}, {row.ci_high:+.4f}] "
            f"oracle {row.oracle_sate:+.4f} (used {row.n_used})"
        )
    return EXIT_OK


def _plot_sim1(out_dir, study):
    try:
        import matplotlib
    except ImportError as exc:
        raise _CliUsage(
            "matplotlib is required for --plot (install copulareg[plots])"
        ) from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from pathlib import Path

    q = [r.cutoff_quantile for r in study.rows]
    mean = [r.sate_mean for r in study.rows]
    lo = [r.ci_low for r in study.rows]
    hi = [r.ci_high for r in study.rows]
    oracle = [r.oracle_sate for r in study.rows]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.fill_between(q, lo, hi, alpha=0.25, label="95% band")
    ax.plot(q, mean, marker="o", label="mean estimate")
    ax.plot(q, oracle, marker="^", linestyle="none", label="oracle")
    ax.set_xlabel("survival-time cutoff quantile")
    ax.set_ylabel("average treatment effect")
    ax.legend()
    fig.tight_layout()
    path = Path(out_dir) / "sim1_curve.svg"
    fig.savefig(path)
    plt.close(fig)
    return path


def _cmd_sim2(args) -> int:
    from .studies import run_sim2

    scenario = _load_scenario(args)
    study = run_sim2(scenario, jobs=args.jobs)
    if all(
        row.n_used_one_stage == 0
        and row.n_used_copula == 0
        and row.n_used_two_stage == 0
        for row in study.rows
    ):
        print("error: every replicate fit failed", file=sys.stderr)
        return EXIT_NUMERIC

    manifest = build_manifest(
        "sim2",
        dataclasses.asdict(scenario),
        scenario.seed,
        __version__,
        _covariate_mapping(),
    )
    meta = {"censoring_bound": study.censoring_bound}
    csv_path, json_path = write_table(
        args.out, "sim2_bias", study.rows, manifest, meta=meta
    )
    _print_written([csv_path, json_path, write_manifest(args.out, manifest)])
    for row in study.rows:
        print(
            f"q={row.cutoff_quantile:.2f} bias one-stage {row.bias_one_stage:+.4f} "
            f"joint {row.bias_copula:+.4f} two-stage {row.bias_two_stage:+.4f}"
        )
    return EXIT_OK


def _flatten_grid_row(row) -> dict:
    flat = {
        "family": row.family,
        "rotation": row.rotation,
        "link_treatment": row.link_treatment,
        "link_outcome": row.link_outcome,
        "aic": row.aic,
        "bic": row.bic,
        "loglik": row.loglik,
        "edf_total": row.edf_total,
        "converged": row.converged,
        "sate": row.sate.value if row.sate else float("nan"),
        "sate_ci_low": row.sate.ci_low if row.sate else float("nan"),
        "sate_ci_high": row.sate.ci_high if row.sate else float("nan"),
        "tau": row.tau.tau if row.tau else float("nan"),
        "tau_ci_low": row.tau.ci_low if row.tau else float("nan"),
        "tau_ci_high": row.tau.ci_high if row.tau else float("nan"),
        "theta": row.tau.theta if row.tau else float("nan"),
        "error": row.error or "",
    }
    return flat


def _coefficient_rows(model) -> list[dict]:
    """Wald-style summary of parametric terms and smooth blocks."""
    rows = []
    cov = model.covariance
    offsets = {"treatment": 0, "outcome": model.coef_treatment.shape[0]}
    equations = (
        ("treatment", model.design.treatment_eq, model.coef_treatment),
        ("outcome", model.design.outcome_eq, model.coef_outcome),
    )
    for eq_name, eq, coef in equations:
        base = offsets[eq_name]
        for i in range(eq.n_unpenalized):
            est = float(coef[i])
            se = float(np.sqrt(max(cov[base + i, base + i], 0.0)))
            z = est / se if se > 0 else float("nan")
            p = 2.0 * stats.norm.sf(abs(z)) if se > 0 else float("nan")
            rows.append(
                {
                    "equation": eq_name,
                    "term": eq.names[i],
                    "kind": "parametric",
                    "estimate": est,
                    "std_error": se,
                    "statistic": z,
                    "p_value": float(p),
                    "edf": 1.0,
                }
            )
        for (a, b), term in zip(eq.smooth_slices, eq.smooths):
            block = coef[a:b]
            V = cov[base + a : base + b, base + a : base + b]
            try:
                stat = float(block @ np.linalg.solve(V, block))
            except np.linalg.LinAlgError:
                stat = float(block @ np.linalg.pinv(V) @ block)
            edf = model.edf_per_smooth.get(
                f"{eq_name}:{term.covariate}", float(b - a)
            )
            p = float(stats.chi2.sf(stat, max(edf, 0.5)))
            rows.append(
                {
                    "equation": eq_name,
                    "term": f"s({term.covariate})",
                    "kind": "smooth",
                    "estimate": float("nan"),
                    "std_error": float("nan"),
                    "statistic": stat,
                    "p_value": p,
                    "edf": float(edf),
                }
            )
    return rows


def _smooth_point_rows(model, n_points: int = 100) -> list[dict]:
    """Evaluated smooth contributions with pointwise 95% bands."""
    rows = []
    cov = model.covariance
    offsets = {"treatment": 0, "outcome": model.coef_treatment.shape[0]}
    equations = (
        ("treatment", model.design.treatment_eq, model.coef_treatment),
        ("outcome", model.design.outcome_eq, model.coef_outcome),
    )
    for eq_name, eq, coef in equations:
        base = offsets[eq_name]
        for (a, b), term in zip(eq.smooth_slices, eq.smooths):
            lo, hi = term.data_range
            grid = np.linspace(lo, hi, n_points)
            basis = basis_rows(term, grid)
            values = basis @ coef[a:b]
            V = cov[base + a : base + b, base + a : base + b]
            var = np.einsum("ij,jk,ik->i", basis, V, basis)
            half = 1.96 * np.sqrt(np.maximum(var, 0.0))
            for x, v, h in zip(grid, values, half):
                rows.append(
                    {
                        "equation": eq_name,
                        "term": term.covariate,
                        "x": float(x),
                        "value": float(v),
                        "ci_low": float(v - h),
                        "ci_high": float(v + h),
                    }
                )
    return rows


def _cmd_analyze(args) -> int:
    config = parse_analysis_config(args.config)
    if args.families:
        families = tuple(
            parse_family(lb) for lb in args.families.split(",") if lb.strip()
        )
        config = dataclasses.replace(config, families=families)
    if args.links:
        link_pairs = tuple(
            parse_link_pair(lb) for lb in args.links.split(",") if lb.strip()
        )
        config = dataclasses.replace(config, link_pairs=link_pairs)

    raw = load_table(args.data)
    used, accounting = prepare_model_frame(raw, config)
    template = template_spec(config)
    combos = [
        (family, rotation, l1, l2)
        for family, rotation in config.families
        for l1, l2 in config.link_pairs
    ]
    seed = 0 if args.seed is None else args.seed

    from .effects import model_grid

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        grid = model_grid(used, template, combos, seed=seed)

    manifest = build_manifest(
        "analyze",
        {
            "config": dataclasses.asdict(config),
            "data": str(args.data),
        },
        seed,
        __version__,
        {
            "treatment": config.treatment,
            "outcome": config.outcome,
            "categorical": {
                col: list(levels) for col, levels in config.categorical_levels
            },
        },
    )
    meta = dict(accounting.as_dict())
    meta["n_model_rows"] = len(used)
    paths = []
    csv_path, json_path = write_table(
        args.out,
        "model_grid",
        [_flatten_grid_row(r) for r in grid],
        manifest,
        meta=meta,
    )
    paths += [csv_path, json_path]

    best = next((r for r in grid if r.converged), None)
    if best is None:
        _print_written(paths + [write_manifest(args.out, manifest)])
        print("error: no model in the grid converged", file=sys.stderr)
        return EXIT_NUMERIC

    spec = dataclasses.replace(
        template,
        treatment_margin=dataclasses.replace(
            template.treatment_margin, link=best.link_treatment
        ),
        outcome_margin=dataclasses.replace(
            template.outcome_margin, link=best.link_outcome
        ),
        copula=dataclasses.replace(
            template.copula, family=best.family, rotation=best.rotation
        ),
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = fit(spec, used)
    best_meta = dict(meta)
    best_meta["best_model"] = (
        f"{best.family}@{best.rotation} "
        f"{best.link_treatment}-{best.link_outcome}"
    )
    csv_path, json_path = write_table(
        args.out, "coefficients", _coefficient_rows(model), manifest,
        meta=best_meta,
    )
    paths += [csv_path, json_path]
    smooth_rows = _smooth_point_rows(model)
    if smooth_rows:
        csv_path, json_path = write_table(
            args.out, "smooth_points", smooth_rows, manifest, meta=best_meta
        )
        paths += [csv_path, json_path]
    paths.append(write_manifest(args.out, manifest))
    _print_written(paths)
    print(
        f"best model {best_meta['best_model']} "
        f"aic {best.aic:.2f} bic {best.bic:.2f} "
        f"effect {best.sate.value:+.4f} "
        f"[{best.sate.ci_low:+.4f}, {best.sate.ci_high:+.4f}]"
    )
    return EXIT_OK


def _cmd_report(args) -> int:
    path = write_report(args.out)
    print(path.read_text(), end="")
    print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(
        prog="copulareg",
        description=(
            "Joint copula regression for an endogenous binary treatment "
            "and a dichotomized survival outcome"
        ),
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="copulareg_output",
                        help="output directory (default: copulareg_output)")
    common.add_argument("--seed", type=int, default=None,
                        help="override the scenario/config seed")
    common.add_argument("--jobs", type=int, default=1,
                        help="parallel workers (default 1; results identical)")

    sim_common = argparse.ArgumentParser(add_help=False)
    sim_common.add_argument("--scenario", default=None,
                            help="scenario YAML (defaults to the built-in scenario)")
    sim_common.add_argument("--replicates", type=int, default=None,
                            help="override the scenario replicate count")

    p1 = sub.add_parser("sim1", parents=[common, sim_common],
                        help="treatment-effect curve across cutoffs")
    p1.add_argument("--plot", action="store_true",
                    help="also render sim1_curve.svg (needs matplotlib)")
    p1.add_argument("--oracle-draws", type=int, default=10**6,
                    help="Monte Carlo sample size for the true-effect curve")
    p1.set_defaults(func=_cmd_sim1)

    p2 = sub.add_parser("sim2", parents=[common, sim_common],
                        help="signed-bias comparison of three estimators")
    p2.set_defaults(func=_cmd_sim2)

    pa = sub.add_parser("analyze", parents=[common],
                        help="model grid and coefficient report for a CSV")
    pa.add_argument("--data", required=True, help="input CSV path")
    pa.add_argument("--config", required=True, help="analysis config YAML")
    pa.add_argument("--families", default=None,
                    help="comma-separated families, e.g. gaussian,clayton@180")
    pa.add_argument("--links", default=None,
                    help="comma-separated link pairs, e.g. probit-probit")
    pa.set_defaults(func=_cmd_analyze)

    pr = sub.add_parser("report", parents=[common],
                        help="merge a directory's outputs into one report")
    pr.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _CliUsage as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except _CliUsage as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # numerical failure fallback
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
