"""Bundled study datasets, CSV ingestion and design-matrix construction.

The five vendored datasets ship with sha256 checksums (``manifest.json``)
verified on load, a provenance note each, and preset formulas reproducing
the published covariate codings.  Outlier variants (replaced or deleted
observations) are constructed on the fly from the clean copies.
"""

from __future__ import annotations

import ast
import csv
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from ..errors import FormulaError, IngestionError, InputError
from ..families import make_family
from ..model import ModelSpec

_ALLOWED_FUNCS = {"log": np.log, "log10": np.log10, "sqrt": np.sqrt, "exp": np.exp}


@dataclass
class Dataset:
    name: str
    columns: list[str]
    values: np.ndarray  # row-major numeric table
    provenance: str = ""

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        try:
            j = self.columns.index(name)
        except ValueError:
            raise FormulaError(f"dataset {self.name!r} has no column {name!r}") from None
        return self.values[:, j]

    def env(self) -> dict:
        return {c: self.column(c) for c in self.columns}


@dataclass
class FormulaSpec:
    """Response, family and ordered design terms.

    Terms are column expressions over the dataset: ``1`` (intercept), a
    column name, scalings like ``Base/4``, transforms ``log(rate)``/
    ``log10(quarter)``, indicators ``block==1`` and products such as
    ``Trt*(Base/4)``.
    """

    response: str
    family: str
    terms: list[str]
    names: list[str] = field(default_factory=list)
    trials: str | None = None


def load_csv(path) -> Dataset:
    """Parse a headed CSV into a numeric table.

    Decimal parsing is locale-independent (dot only); malformed rows and
    non-numeric cells raise :class:`IngestionError` with their position.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file, expected a header row") from None
        width = len(header)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise IngestionError(
                    f"{path}:{lineno}: expected {width} cells, found {len(row)}"
                )
            parsed = []
            for name, cell in zip(header, row):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise IngestionError(
                        f"{path}:{lineno}: non-numeric value {cell!r} in column {name!r}"
                    ) from None
            rows.append(parsed)
    values = np.array(rows, dtype=float) if rows else np.empty((0, width))
    return Dataset(name=str(path), columns=list(header), values=values)


# ---------------------------------------------------------------------------
# bundled datasets

_PROVENANCE = {
    "epilepsy": (
        "Seizure counts for 59 epilepsy patients from the progabide clinical "
        "trial (Leppik et al. 1985), as tabulated by Thall and Vail (1990); "
        "response is the total count over the four post-randomization "
        "two-week periods. One placebo patient (Base 23, Age 37) is recorded "
        "with total 15, where other circulating transcriptions sum to 22; "
        "this copy matches the published regression results reproduced here."
    ),
    "aids": (
        "Quarterly counts of new AIDS cases in Australia, 1984 to 1988 "
        "(National Centre for HIV Epidemiology and Clinical Research), as "
        "given by Dobson (2002). The preset regresses on log10 of the "
        "quarter index."
    ),
    "leukemia": (
        "Survival of 33 leukemia patients (Feigl and Zelen 1965) as listed "
        "by Cook and Weisberg (1982, p. 193): white blood cell count, AG "
        "indicator, survival time in weeks, and the indicator of surviving "
        "at least 52 weeks. Ordered so the influential long-surviving "
        "patient with WBC 100000 is observation 15."
    ),
    "skin": (
        "Finney's (1947) vaso-constriction data: occurrence of "
        "vaso-constriction in the skin of the digits after a single deep "
        "breath, with inspired air volume and inspiration rate. "
        "Observations 4 and 18 are the classical influential points "
        "(Pregibon 1981)."
    ),
    "carrots": (
        "Insect-damaged carrots from the soil-insecticide trial of Phelps "
        "(1982), as analysed by Williams (1987) and Cantoni and Ronchetti "
        "(2001): eight log-dose levels in three blocks, success = damaged "
        "count out of total. Cell values reconstructed to match the "
        "published regression analyses of this trial; two totals differ "
        "from some circulating copies."
    ),
}

PRESETS = {
    "epilepsy": FormulaSpec(
        response="y",
        family="poisson",
        terms=["1", "Trt", "Base/4", "Age/10", "Trt*(Base/4)"],
        names=["Intercept", "Trt", "Base", "Age", "Trt:Base"],
    ),
    "aids": FormulaSpec(
        response="cases",
        family="poisson",
        terms=["1", "log10(quarter)"],
        names=["Intercept", "log(time)"],
    ),
    "leukemia": FormulaSpec(
        response="survive52",
        family="bernoulli",
        terms=["1", "ag", "wbc/10000"],
        names=["Intercept", "AG", "WBC"],
    ),
    "skin": FormulaSpec(
        response="y",
        family="bernoulli",
        terms=["1", "log(rate)", "log(volume)"],
        names=["Intercept", "log(Rate)", "log(Vol)"],
    ),
    "carrots": FormulaSpec(
        response="success",
        family="binomial",
        terms=["1", "logdose", "block==1", "block==2"],
        names=["Intercept", "logdose", "Block1", "Block2"],
        trials="total",
    ),
}

VARIANTS = {
    "epilepsy": ("clean",),
    "aids": ("clean", "one_outlier", "two_outliers"),
    "leukemia": ("clean", "without_outlier"),
    "skin": ("clean", "without_outliers"),
    "carrots": ("clean",),
}


def list_datasets():
    return sorted(PRESETS)


def _data_path(name: str):
    return resources.files(__package__) / f"{name}.csv"


def _manifest():
    with (resources.files(__package__) / "manifest.json").open("r", encoding="utf-8") as fh:
        return json.load(fh)


def dataset_checksum(name: str) -> str:
    with _data_path(name).open("rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def load_dataset(name: str, variant: str = "clean") -> Dataset:
    """Load a bundled dataset, verifying its checksum, and apply a variant."""
    if name not in PRESETS:
        raise InputError(f"unknown dataset {name!r}; available: {list_datasets()}")
    manifest = _manifest()
    digest = dataset_checksum(name)
    if digest != manifest[name]["sha256"]:
        raise IngestionError(
            f"checksum mismatch for bundled dataset {name!r}: "
            f"{digest} != {manifest[name]['sha256']}"
        )
    with resources.as_file(_data_path(name)) as p:
        ds = load_csv(p)
    ds.name = name
    ds.provenance = _PROVENANCE[name]
    return dataset_variants(ds, variant)


def dataset_variants(ds: Dataset, variant: str = "clean") -> Dataset:
    """Return a modified copy implementing the published outlier variants.

    ``aids``: replace the first count by 10 (``one_outlier``) and
    additionally the last by 15 (``two_outliers``).  ``leukemia``: drop
    observation 15.  ``skin``: drop observations 4 and 18.  The input is
    never mutated.
    """
    allowed = VARIANTS.get(ds.name, ("clean",))
    if variant not in allowed:
        raise InputError(
            f"unknown variant {variant!r} for dataset {ds.name!r}; "
            f"allowed: {allowed}"
        )
    values = ds.values.copy()
    if ds.name == "aids" and variant in ("one_outlier", "two_outliers"):
        j = ds.columns.index("cases")
        values[0, j] = 10.0
        if variant == "two_outliers":
            values[-1, j] = 15.0
    elif ds.name == "leukemia" and variant == "without_outlier":
        values = np.delete(values, 14, axis=0)
    elif ds.name == "skin" and variant == "without_outliers":
        values = np.delete(values, [3, 17], axis=0)
    label = ds.name if variant == "clean" else f"{ds.name}/{variant}"
    return Dataset(name=label, columns=list(ds.columns), values=values,
                   provenance=ds.provenance)


# ---------------------------------------------------------------------------
# formula evaluation

def _eval_node(node, env):
    if isinstance(node, ast.Expression):
        return _eval_node(node.body, env)
    if isinstance(node, ast.Constant):
        if isinstance(node.value, (int, float)):
            return float(node.value)
        raise FormulaError(f"unsupported constant {node.value!r}")
    if isinstance(node, ast.Name):
        if node.id in env:
            return env[node.id]
        raise FormulaError(f"unknown column {node.id!r}")
    if isinstance(node, ast.BinOp) and isinstance(
        node.op, (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
    ):
        left = _eval_node(node.left, env)
        right = _eval_node(node.right, env)
        ops = {
            ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply,
            ast.Div: np.divide, ast.Pow: np.power,
        }
        return ops[type(node.op)](left, right)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        value = _eval_node(node.operand, env)
        return -value if isinstance(node.op, ast.USub) else value
    if isinstance(node, ast.Call):
        if isinstance(node.func, ast.Name) and node.func.id in _ALLOWED_FUNCS and not node.keywords:
            args = [_eval_node(a, env) for a in node.args]
            return _ALLOWED_FUNCS[node.func.id](*args)
        raise FormulaError(f"unsupported function call in term")
    if isinstance(node, ast.Compare) and len(node.ops) == 1 and isinstance(node.ops[0], ast.Eq):
        left = _eval_node(node.left, env)
        right = _eval_node(node.comparators[0], env)
        return (np.asarray(left) == np.asarray(right)).astype(float)
    raise FormulaError(f"unsupported syntax in term: {ast.dump(node)}")


def eval_term(term: str, env: dict, n: int) -> np.ndarray:
    """Evaluate one design term against the dataset columns."""
    term = term.strip()
    try:
        tree = ast.parse(term, mode="eval")
    except SyntaxError as exc:
        raise FormulaError(f"cannot parse term {term!r}: {exc}") from None
    value = _eval_node(tree, env)
    value = np.asarray(value, dtype=float)
    if value.ndim == 0:
        value = np.full(n, float(value))
    if value.shape != (n,):
        raise FormulaError(f"term {term!r} does not evaluate to a column")
    if not np.all(np.isfinite(value)):
        raise FormulaError(f"term {term!r} produced non-finite values")
    return value


def build_model(ds: Dataset, formula: FormulaSpec) -> ModelSpec:
    """Assemble a fit-ready model from a dataset and a formula."""
    if len(set(formula.terms)) != len(formula.terms):
        raise FormulaError("formula terms must be unique")
    env = ds.env()
    n = ds.n_rows
    cols = [eval_term(t, env, n) for t in formula.terms]
    X = np.column_stack(cols) if cols else np.empty((n, 0))
    y = ds.column(formula.response)
    trials = None
    if formula.trials is not None:
        trials = ds.column(formula.trials).astype(int)
    family = make_family(formula.family, trials=trials)
    names = list(formula.names) if formula.names else [t for t in formula.terms]
    return ModelSpec(X=X, y=y, family=family, column_names=names)


def preset_model(name: str, variant: str = "clean") -> ModelSpec:
    """Load a bundled dataset and build its published model."""
    ds = load_dataset(name, variant)
    return build_model(ds, PRESETS[name])


def ungrouped_binomial(spec: ModelSpec) -> ModelSpec:
    """Expand a grouped binomial model into one row per Bernoulli trial.

    The published carrots analysis treats each carrot as an individual
    binary outcome when estimating; standard errors are still assessed on
    the grouped representation.
    """
    from ..families import Bernoulli, Binomial

    if not isinstance(spec.family, Binomial):
        raise InputError("only grouped binomial models can be ungrouped")
    m = spec.family.trials
    reps = m.astype(int)
    X = np.repeat(spec.X, reps, axis=0)
    y = np.concatenate([
        np.concatenate([np.ones(int(k)), np.zeros(int(mm) - int(k))])
        for k, mm in zip(spec.y.astype(int), reps)
    ])
    return ModelSpec(X=X, y=y, family=Bernoulli(), column_names=list(spec.column_names))
