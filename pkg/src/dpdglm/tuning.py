"""Data-driven tuning-parameter choice by estimated mean squared error.

A pilot estimate stands in for the unknown target; each candidate's
estimated MSE is its squared distance from the pilot plus the trace of its
own sandwich covariance.  The selected tuning parameter minimizes this
curve over the grid, with ties broken toward the smaller value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, InferenceError, InputError, PartialCurveError
from .model import ModelSpec
from .solver import FitResult, SolverOptions, StartSource, fit

DEFAULT_PILOT = 0.5
DEFAULT_GRID_STEP = 0.05


@dataclass(frozen=True)
class MseEntry:
    alpha: float
    bias_sq: float
    variance_trace: float
    mse: float


@dataclass
class AlphaSelection:
    pilot_alpha: float
    candidate_grid: list[float]
    mse_curve: list[MseEntry] = field(default_factory=list)
    optimal_alpha: float = 0.0


def default_grid(step: float = DEFAULT_GRID_STEP, lo: float = 0.0, hi: float = 1.0):
    count = int(round((hi - lo) / step))
    return [round(lo + k * step, 10) for k in range(count + 1)]


def estimated_mse(spec: ModelSpec, candidate_fit: FitResult, pilot_fit: FitResult) -> MseEntry:
    """Estimated MSE of one candidate against the pilot target.

    The bias term compares the packed estimates (scale included when free);
    the variance term is the per-observation trace of the candidate's
    sandwich covariance, i.e. ``trace(vcov)`` since ``vcov`` already divides
    the asymptotic variance by the sample size.
    """
    diff = candidate_fit.params - pilot_fit.params
    bias_sq = float(diff @ diff)
    if candidate_fit.vcov is None:
        raise InferenceError(
            f"candidate at alpha={candidate_fit.alpha:g} carries no covariance"
        )
    variance_trace = float(np.trace(candidate_fit.vcov))
    return MseEntry(
        alpha=float(candidate_fit.alpha),
        bias_sq=bias_sq,
        variance_trace=variance_trace,
        mse=bias_sq + variance_trace,
    )


def select_alpha(spec: ModelSpec, pilot_alpha: float = DEFAULT_PILOT, grid=None,
                 options: SolverOptions | None = None) -> AlphaSelection:
    """Pick the tuning parameter minimizing the estimated MSE over a grid.

    Fits the pilot, then a warm-started path over the grid; if the pilot
    value lies on the grid its path fit doubles as the pilot so the bias
    vanishes there identically.  Failed candidate fits abort the selection
    with a :class:`PartialCurveError` listing the offending values.
    """
    if grid is None:
        grid = default_grid()
    grid = sorted(float(a) for a in grid)
    if not grid:
        raise InputError("candidate grid must be nonempty")
    if grid[0] < 0 or pilot_alpha < 0:
        raise InputError("tuning-parameter values must be nonnegative")
    options = options or SolverOptions()

    fits: dict[float, FitResult | None] = {}
    failed: list[float] = []
    prev: FitResult | None = None
    for a in grid:
        try:
            if prev is None:
                res = fit(spec, a, options)
            else:
                res = fit(spec, a, options, start=prev.params,
                          start_source=StartSource("warm", prev.alpha))
            fits[a] = res
            prev = res
        except ConvergenceError:
            fits[a] = None
            failed.append(a)
    if failed:
        raise PartialCurveError(
            f"candidate fits failed at alpha = {failed}", failed_alphas=failed
        )

    pilot_fit = fits.get(pilot_alpha)
    if pilot_fit is None:
        pilot_fit = fit(spec, pilot_alpha, options)

    curve = [estimated_mse(spec, fits[a], pilot_fit) for a in grid]
    best = min(range(len(grid)), key=lambda k: curve[k].mse)
    return AlphaSelection(
        pilot_alpha=float(pilot_alpha),
        candidate_grid=list(grid),
        mse_curve=curve,
        optimal_alpha=float(grid[best]),
    )
