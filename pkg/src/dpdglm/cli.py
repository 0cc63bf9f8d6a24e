"""Command-line front end: fitting, table reproduction, diagnostics.

Exit codes: 0 success, 1 usage error, 2 non-convergence, 3 reproduction
beyond tolerance.
"""

from __future__ import annotations

import datetime
import json
import os
import sys

import click
import numpy as np
from scipy import stats

from . import __version__
from .datasets import (PRESETS, VARIANTS, build_model, dataset_checksum,
                       FormulaSpec, list_datasets, load_csv, load_dataset,
                       preset_model)
from .errors import ConvergenceError, DpdError, InputError
from .influence import influence_grid_export, write_influence_csv
from .model import ModelSpec
from .reproduce import reproduce_table, table_ids, write_diff_csv, write_table_csv
from .simulate import TABLE_ALPHAS, build_case, run_scenario, table_render
from .solver import FitResult, SolverOptions, StartSource, fit
from .tuning import select_alpha

_EXIT_USAGE = 1
_EXIT_CONVERGENCE = 2
_EXIT_TOLERANCE = 3


def _manifest(seed=None, checksum=None, options=None):
    return {
        "command": " ".join(sys.argv),
        "tool": "dpdglm",
        "version": __version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "seed": seed,
        "dataset_sha256": checksum,
        "solver_options": options.__dict__ if options is not None else None,
    }


def _parse_alphas(text):
    try:
        alphas = [float(a) for a in text.split(",") if a.strip() != ""]
    except ValueError:
        raise click.UsageError(f"cannot parse alpha list {text!r}")
    if not alphas:
        raise click.UsageError("empty alpha list")
    if any(a < 0 for a in alphas):
        raise click.UsageError("alpha values must be nonnegative")
    return sorted(alphas)


def _parse_preset(text):
    name, _, variant = text.partition(":")
    if name not in PRESETS:
        raise click.UsageError(
            f"unknown preset {name!r}; available: {list_datasets()}"
        )
    variant = variant or "clean"
    if variant not in VARIANTS[name]:
        raise click.UsageError(
            f"unknown variant {variant!r} for {name!r}; allowed: {VARIANTS[name]}"
        )
    return name, variant


def _build_spec(preset, csv_path, response, family, terms, trials):
    if preset:
        name, variant = _parse_preset(preset)
        return preset_model(name, variant), dataset_checksum(name)
    if not csv_path:
        raise click.UsageError("provide --preset or --csv")
    if not response or not family:
        raise click.UsageError("--csv requires --response and --family")
    ds = load_csv(csv_path)
    term_list = [t.strip() for t in terms.split(";")] if terms else ["1"]
    formula = FormulaSpec(response=response, family=family, terms=term_list,
                          trials=trials)
    return build_model(ds, formula), None


@click.group()
def cli():
    """Robust GLM estimation via minimum density power divergence."""


@cli.command("fit")
@click.option("--preset", default=None, help="bundled dataset, e.g. aids or aids:two_outliers")
@click.option("--csv", "csv_path", default=None, type=click.Path(exists=True))
@click.option("--response", default=None, help="response column for --csv")
@click.option("--family", default=None, help="family for --csv")
@click.option("--terms", default=None, help="semicolon-separated design terms for --csv")
@click.option("--trials", default=None, help="trials column (binomial)")
@click.option("--alpha", "alphas", default="0", show_default=True,
              help="comma-separated tuning parameters")
@click.option("--max-iter", default=200, show_default=True)
@click.option("--grad-tol", default=1e-8, show_default=True)
@click.option("--step-tol", default=1e-10, show_default=True)
@click.option("--cold-start", is_flag=True, help="no warm starts along the path")
@click.option("--multistart", is_flag=True, help="probe extra basins, keep the lowest objective")
@click.option("--reference", type=click.Choice(["t", "normal"]), default="t",
              show_default=True, help="p-value reference distribution")
@click.option("-o", "--output", default=None, type=click.Path(), help="write JSON here")
def cmd_fit(preset, csv_path, response, family, terms, trials, alphas,
            max_iter, grad_tol, step_tol, cold_start, multistart, reference,
            output):
    """Fit the estimator over a list of tuning parameters; emit JSON."""
    alpha_list = _parse_alphas(alphas)
    spec, checksum = _build_spec(preset, csv_path, response, family, terms, trials)
    options = SolverOptions(max_iter=max_iter, grad_tol=grad_tol,
                            step_tol=step_tol, cold_start=cold_start,
                            multistart=multistart)

    results = []
    any_failed = False
    prev: FitResult | None = None
    for a in alpha_list:
        try:
            if prev is None or options.cold_start:
                res = fit(spec, a, options)
            else:
                res = fit(spec, a, options, start=prev.params,
                          start_source=StartSource("warm", prev.alpha))
        except ConvergenceError as exc:
            res = getattr(exc, "result", None)
            any_failed = True
            if res is None:
                results.append({"alpha": a, "converged": False, "error": str(exc)})
                prev = None
                continue
        results.append(_result_json(spec, res, reference))
        prev = res

    payload = {
        "manifest": _manifest(checksum=checksum, options=options),
        "results": results,
    }
    text = json.dumps(payload, indent=2)
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        click.echo(text)
    if any_failed:
        sys.exit(_EXIT_CONVERGENCE)


def _result_json(spec: ModelSpec, res: FitResult, reference="t"):
    names = spec.column_names
    out = {
        "alpha": res.alpha,
        "beta": {str(n): float(b) for n, b in zip(names, res.beta_hat)},
        "phi": res.phi_hat,
        "objective": res.objective,
        "grad_norm": res.grad_norm,
        "iterations": res.iterations,
        "converged": res.converged,
        "start_source": str(res.start_source),
    }
    if res.se is not None:
        se = res.se[: len(names)]
        tstat = res.beta_hat / se
        if reference == "t":
            pvals = 2.0 * stats.t.sf(np.abs(tstat), df=spec.n - spec.p)
        else:
            pvals = 2.0 * stats.norm.sf(np.abs(tstat))
        out["se"] = {str(n): float(s) for n, s in zip(names, se)}
        out["t"] = {str(n): float(t) for n, t in zip(names, tstat)}
        out["p"] = {str(n): float(p) for n, p in zip(names, pvals)}
    return out


@cli.command("reproduce")
@click.argument("table_id")
@click.option("--reps", default=1000, show_default=True, help="replications for T1-T4")
@click.option("--seed", default=42, show_default=True)
@click.option("--workers", default=None, type=int,
              help="worker processes (default: DPDGLM_WORKERS or 1)")
@click.option("--out-dir", default=".", type=click.Path(file_okay=False),
              show_default=True)
def cmd_reproduce(table_id, reps, seed, workers, out_dir):
    """Regenerate a reference table and diff it against vendored values."""
    ids = table_ids() if table_id.lower() == "all" else [table_id]
    workers = workers or int(os.environ.get("DPDGLM_WORKERS", "1"))
    os.makedirs(out_dir, exist_ok=True)
    all_pass = True
    for tid in ids:
        try:
            report = reproduce_table(tid, reps=reps, seed=seed, workers=workers,
                                     progress=True)
        except InputError as exc:
            raise click.UsageError(str(exc))
        write_table_csv(report, os.path.join(out_dir, f"{tid.lower()}_generated.csv"))
        write_diff_csv(report, os.path.join(out_dir, f"{tid.lower()}_diff.csv"))
        click.echo(report.summary())
        all_pass = all_pass and report.passed
    if not all_pass:
        sys.exit(_EXIT_TOLERANCE)


@cli.command("influence")
@click.option("--preset", default=None, help="bundled dataset preset")
@click.option("--model", "model_name", default=None,
              help="synthetic design, e.g. poisson-case-I")
@click.option("--n", default=50, show_default=True, help="sample size for --model")
@click.option("--beta", default=None, help="true coefficients for --model (comma list)")
@click.option("--i0", default="1", show_default=True, help="contamination directions")
@click.option("--alphas", default="0,0.5", show_default=True)
@click.option("--t-max", default=None, type=float, help="grid upper bound override")
@click.option("-o", "--output", default="influence.csv", show_default=True,
              type=click.Path())
def cmd_influence(preset, model_name, n, beta, i0, alphas, t_max, output):
    """Export influence curves over a contamination grid as CSV."""
    alpha_list = _parse_alphas(alphas)
    i0_list = [int(v) for v in i0.split(",")]
    if preset:
        name, variant = _parse_preset(preset)
        spec = preset_model(name, variant)
        fits = [fit(spec, a) for a in alpha_list]
    elif model_name:
        spec, beta_true = _synthetic_model(model_name, n, beta)
        fits = [
            FitResult(alpha=a, beta_hat=beta_true, phi_hat=None, objective=0.0,
                      grad_norm=0.0, vcov=None, se=None, iterations=0,
                      converged=True, start_source=StartSource("cold"))
            for a in alpha_list
        ]
    else:
        raise click.UsageError("provide --preset or --model")
    grid = None
    if t_max is not None:
        grid = np.arange(0.0, float(t_max) + 1.0)
    rows = influence_grid_export(spec, fits, i0_list, grid=grid)
    write_influence_csv(rows, output)
    click.echo(f"wrote {len(rows)} influence values to {output}")


def _synthetic_model(model_name, n, beta):
    from .simulate import LOGISTIC_CASES, POISSON_CASES, SimScenario

    parts = model_name.lower().split("-")
    if len(parts) != 3 or parts[1] != "case":
        raise click.UsageError(
            "model must look like poisson-case-I or logistic-case-III"
        )
    family, case_id = parts[0], parts[2].upper()
    catalogue = POISSON_CASES if family == "poisson" else LOGISTIC_CASES
    if case_id not in catalogue:
        raise click.UsageError(f"unknown case {case_id!r}")
    beta_cat, rule = catalogue[case_id]
    beta_true = np.array([float(b) for b in beta.split(",")]) if beta else np.array(beta_cat)
    scenario = SimScenario(family=family, case_id=case_id, n=n,
                           beta_true=tuple(beta_true), covariate_rule=rule)
    X = scenario.design()
    if beta_true.shape[0] != X.shape[1]:
        raise click.UsageError("beta length does not match the case design")
    eta = X @ beta_true
    from .families import Bernoulli, Poisson
    if family == "poisson":
        y = np.round(np.exp(eta))  # feasible placeholder responses
        fam = Poisson()
    else:
        y = (eta > 0).astype(float)
        fam = Bernoulli()
    return ModelSpec(X=X, y=y, family=fam), beta_true


@cli.command("select-alpha")
@click.option("--preset", required=True, help="bundled dataset preset")
@click.option("--pilot", default=0.5, show_default=True)
@click.option("--grid-step", default=0.05, show_default=True)
@click.option("-o", "--output", default=None, type=click.Path(),
              help="write the MSE curve CSV here")
def cmd_select_alpha(preset, pilot, grid_step, output):
    """Choose the tuning parameter by minimizing estimated MSE."""
    name, variant = _parse_preset(preset)
    spec = preset_model(name, variant)
    if pilot < 0 or grid_step <= 0:
        raise click.UsageError("pilot must be >= 0 and grid-step positive")
    from .tuning import default_grid
    try:
        selection = select_alpha(spec, pilot_alpha=pilot,
                                 grid=default_grid(grid_step))
    except ConvergenceError as exc:
        click.echo(f"selection failed: {exc}", err=True)
        sys.exit(_EXIT_CONVERGENCE)
    lines = ["alpha,bias_sq,variance_trace,mse"]
    for e in selection.mse_curve:
        lines.append(f"{e.alpha:.17g},{e.bias_sq:.17g},{e.variance_trace:.17g},{e.mse:.17g}")
    text = "\n".join(lines) + "\n"
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)
    click.echo(f"optimal alpha: {selection.optimal_alpha:g} (pilot {pilot:g})")


@cli.command("simulate")
@click.option("--family", type=click.Choice(["poisson", "logistic"]), required=True)
@click.option("--case", "case_id", required=True, help="case id I..VI")
@click.option("--n", default=50, show_default=True)
@click.option("--reps", default=1000, show_default=True)
@click.option("--seed", default=42, show_default=True)
@click.option("--workers", default=None, type=int)
@click.option("--convention", type=click.Choice(["sandwich", "curvature"]),
              default="sandwich", show_default=True)
@click.option("-o", "--output", default=None, type=click.Path())
def cmd_simulate(family, case_id, n, reps, seed, workers, convention, output):
    """Run one relative-efficiency scenario; emit the table row CSV."""
    workers = workers or int(os.environ.get("DPDGLM_WORKERS", "1"))
    try:
        scenario = build_case(family, case_id.upper(), n, alpha_grid=TABLE_ALPHAS,
                              replications=reps, seed=seed)
    except InputError as exc:
        raise click.UsageError(str(exc))
    result = run_scenario(scenario, workers=workers, progress=True)
    text = table_render([result], convention=convention)
    if result.failures:
        click.echo(f"excluded {result.failures} failed replications", err=True)
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


@cli.command("datasets")
@click.option("--checksums", is_flag=True, help="print sha256 checksums")
def cmd_datasets(checksums):
    """List the bundled datasets and their provenance."""
    for name in list_datasets():
        ds = load_dataset(name)
        line = f"{name}: {ds.n_rows} rows, columns {ds.columns}, variants {VARIANTS[name]}"
        if checksums:
            line += f"\n  sha256 {dataset_checksum(name)}"
        click.echo(line)
        click.echo(f"  {ds.provenance}")


def main():
    try:
        cli.main(standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        sys.exit(_EXIT_USAGE)
    except click.ClickException as exc:
        exc.show()
        sys.exit(_EXIT_USAGE)
    except click.exceptions.Abort:
        sys.exit(_EXIT_USAGE)
    except ConvergenceError as exc:
        click.echo(f"convergence failure: {exc}", err=True)
        sys.exit(_EXIT_CONVERGENCE)
    except DpdError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(_EXIT_USAGE)


if __name__ == "__main__":
    main()
