"""Monte Carlo study of relative efficiency across tuning parameters.

Replicates the published efficiency experiments: six fixed-design cases per
family, responses simulated at the true coefficients, a warm-started fit
path over the tuning grid per replication, and per-coefficient efficiency
relative to the maximum-likelihood end of the path.  Streams are keyed by
``(seed, replication)`` with a counter-based generator so results do not
depend on worker scheduling.
"""

from __future__ import annotations

import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, InferenceError, InputError
from .families import Bernoulli, Poisson
from .inference import relative_efficiency, sandwich
from .model import ModelSpec
from .solver import SolverOptions, StartSource, fit, fit_path

TABLE_ALPHAS = (0.0, 0.01, 0.1, 0.25, 0.4, 0.5, 0.7, 1.0)
MAX_FAILURE_FRACTION = 0.01

# Case catalogue: true coefficients and the fixed covariate rule.
_RULES = {
    "sqrt": lambda i: np.column_stack([np.ones_like(i), np.sqrt(i)]),
    "inverse": lambda i: np.column_stack([np.ones_like(i), 1.0 / i]),
    "sqrt_inv2": lambda i: np.column_stack(
        [np.ones_like(i), np.sqrt(i), 1.0 / i ** 2]
    ),
    "inv_inv2": lambda i: np.column_stack(
        [np.ones_like(i), 1.0 / i, 1.0 / i ** 2]
    ),
}

# Cases V and VI are catalogued with decaying covariates: the published
# efficiency values for them are only consistent with (1, 1/i, 1/i^2),
# while a sqrt(i) second column would collapse their efficiencies to the
# case-I pattern.  Custom scenarios can still use the "sqrt_inv2" rule.
POISSON_CASES = {
    "I": ((1.0, 1.0), "sqrt"),
    "II": ((1.0, 0.5), "sqrt"),
    "III": ((1.0, 1.0), "inverse"),
    "IV": ((1.0, 0.5), "inverse"),
    "V": ((1.0, 1.0, 1.0), "inv_inv2"),
    "VI": ((2.0, 1.0, 0.5), "inv_inv2"),
}

LOGISTIC_CASES = {
    "I": ((0.1, 0.1), "sqrt"),
    "II": ((0.001, 0.0001), "sqrt"),
    "III": ((1.0, 1.0), "inverse"),
    "IV": ((0.1, 0.1), "inverse"),
    "V": ((0.1, 0.1, 0.1), "inv_inv2"),
    "VI": ((0.01, 0.001, 0.0001), "inv_inv2"),
}


@dataclass(frozen=True)
class SimScenario:
    family: str
    case_id: str
    n: int
    beta_true: tuple
    covariate_rule: str
    alpha_grid: tuple = TABLE_ALPHAS
    replications: int = 1000
    seed: int = 42

    def design(self) -> np.ndarray:
        i = np.arange(1, self.n + 1, dtype=float)
        return _RULES[self.covariate_rule](i)


@dataclass
class SimResult:
    scenario: SimScenario
    re_mean: np.ndarray  # n_alpha x p, sandwich-variance efficiencies
    re_mc_se: np.ndarray
    failures: int = 0
    # Binary resamples can be separated, in which case the reference
    # maximum-likelihood fit diverges and the efficiency ratio is undefined
    # for that replication; such draws are excluded and counted here.
    separated: int = 0
    replications_used: int = 0
    coefficients: list = field(default_factory=list)
    # Curvature-only variant: inverse-curvature diagonals in place of the
    # sandwich.  Not an estimator property of interest in itself, but some
    # published efficiency tables can be shown to use exactly this ratio.
    re_naive_mean: np.ndarray | None = None
    re_naive_mc_se: np.ndarray | None = None


def build_case(family: str, case_id: str, n: int, alpha_grid=TABLE_ALPHAS,
               replications: int = 1000, seed: int = 42) -> SimScenario:
    catalogue = POISSON_CASES if family == "poisson" else LOGISTIC_CASES
    if case_id not in catalogue:
        raise InputError(f"unknown case {case_id!r}; choose from {sorted(catalogue)}")
    beta, rule = catalogue[case_id]
    return SimScenario(
        family=family, case_id=case_id, n=n, beta_true=beta,
        covariate_rule=rule, alpha_grid=tuple(float(a) for a in alpha_grid),
        replications=replications, seed=seed,
    )


def run_scenario(scenario: SimScenario, workers: int = 1, progress=False) -> SimResult:
    """Run the replications and aggregate mean efficiencies.

    Failed replications (non-convergent fits or singular curvature) are
    counted and excluded; more than 1% of failures aborts the scenario.
    Aggregation stacks per-replication values in replication order, so the
    result is bit-identical for any worker count.
    """
    alphas = list(scenario.alpha_grid)
    if alphas != sorted(alphas) or alphas[0] != 0.0:
        raise InputError("alpha grid must be ascending and start at 0")
    reps = scenario.replications
    args = [(scenario, rep) for rep in range(reps)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(_one_replication, args, chunksize=16))
    else:
        raw = []
        for k, a in enumerate(args):
            raw.append(_one_replication(a))
            if progress and (k + 1) % 100 == 0:
                print(f"  replication {k + 1}/{reps}", file=sys.stderr)

    values = [v for v in raw if isinstance(v, np.ndarray)]
    separated = sum(1 for v in raw if isinstance(v, str))
    failures = reps - len(values) - separated
    if failures > MAX_FAILURE_FRACTION * reps:
        raise ConvergenceError(
            f"{failures} of {reps} replications failed "
            f"(limit {MAX_FAILURE_FRACTION:.0%})"
        )
    stacked = np.stack(values, axis=0)  # used x 2 x n_alpha x p
    used = stacked.shape[0]
    means = np.sum(stacked, axis=0) / used
    if used > 1:
        ses = np.std(stacked, axis=0, ddof=1) / np.sqrt(used)
    else:
        ses = np.zeros_like(means)
    X = scenario.design()
    return SimResult(
        scenario=scenario,
        re_mean=means[0],
        re_mc_se=ses[0],
        failures=failures,
        separated=separated,
        replications_used=used,
        coefficients=[f"beta{j}" for j in range(X.shape[1])],
        re_naive_mean=means[1],
        re_naive_mc_se=ses[1],
    )


def table_render(results, digits: int = 1, convention: str = "sandwich") -> str:
    """Lay out scenario results as CSV: one row per (case, coefficient),
    one column per tuning-parameter value, rounded to one decimal.  The
    ``convention`` selects sandwich-variance efficiencies (default) or the
    curvature-only variant."""
    lines = []
    alphas = None
    for res in results:
        if alphas is None:
            alphas = list(res.scenario.alpha_grid)
            header = ["family", "case", "n", "coefficient"] + [
                f"alpha={a:g}" for a in alphas
            ]
            lines.append(",".join(header))
        s = res.scenario
        table = res.re_naive_mean if convention == "curvature" else res.re_mean
        for j, coef in enumerate(res.coefficients):
            cells = [f"{table[k, j]:.{digits}f}" for k in range(len(alphas))]
            lines.append(",".join([s.family, s.case_id, str(s.n), coef] + cells))
    if alphas is None:
        lines.append("family,case,n,coefficient")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------


def _continue_path(spec, alphas, mle):
    results = [mle]
    prev = mle
    for a in alphas[1:]:
        prev = fit(spec, a, SolverOptions(), start=prev.params,
                   start_source=StartSource("warm", prev.alpha))
        results.append(prev)
    return results


def _one_replication(args):
    scenario, rep = args
    X = scenario.design()
    beta_true = np.asarray(scenario.beta_true, dtype=float)
    eta = X @ beta_true
    rng = np.random.Generator(
        np.random.Philox(key=np.array([scenario.seed, rep], dtype=np.uint64))
    )
    if scenario.family == "poisson":
        y = rng.poisson(np.exp(eta)).astype(float)
        family = Poisson()
    elif scenario.family == "logistic":
        pi = 1.0 / (1.0 + np.exp(-eta))
        y = rng.binomial(1, pi).astype(float)
        family = Bernoulli()
    else:
        raise InputError(f"unknown family {scenario.family!r}")
    spec = ModelSpec(X=X, y=y, family=family)
    try:
        mle = fit(spec, 0.0, SolverOptions())
    except (ConvergenceError, InputError):
        # reference fit diverges (separated binary resample): the
        # efficiency ratio is undefined for this draw
        return "separated"
    try:
        path = _continue_path(spec, scenario.alpha_grid, mle)
    except (ConvergenceError, InputError):
        return None
    rows = []
    naive_rows = []
    ref_av = ref_psi_inv = None
    for res in path:
        try:
            sw = sandwich(spec, res.beta_hat, spec.phi_value, res.alpha)
            psi_inv = np.linalg.inv(sw.psi)
            if ref_av is None:
                ref_av, ref_psi_inv = sw.av, psi_inv
            rows.append(relative_efficiency(ref_av, sw.av))
            naive_rows.append(relative_efficiency(ref_psi_inv, psi_inv))
        except (InferenceError, np.linalg.LinAlgError):
            return None
    return np.stack([rows, naive_rows], axis=0)
