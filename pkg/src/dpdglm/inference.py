"""Sandwich asymptotics: curvature matrices, standard errors, Wald tests."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy import stats

from .errors import DegenerateInferenceError, InferenceError
from .families import GammaSet
from .model import ModelSpec


@dataclass(frozen=True)
class SandwichMatrices:
    """Curvature matrix ``psi``, score-variance matrix ``omega`` and the
    sandwich asymptotic variance ``av = psi^-1 omega psi^-1``."""

    psi: np.ndarray
    omega: np.ndarray
    av: np.ndarray
    condition_number: float


def build_psi(spec: ModelSpec, gs: GammaSet) -> np.ndarray:
    """Assemble the curvature matrix from second-order power moments."""
    X = spec.X
    n = spec.n
    beta_block = (X.T * gs.gamma11) @ X / n
    if not spec.estimate_scale:
        return beta_block
    cross = X.T @ gs.gamma12 / n
    scale_block = np.sum(gs.gamma22) / n
    top = np.hstack([beta_block, cross[:, None]])
    bottom = np.hstack([cross, [scale_block]])
    return np.vstack([top, bottom[None, :]])


def build_omega(spec: ModelSpec, gs_two: GammaSet, gs_one: GammaSet) -> np.ndarray:
    """Assemble the score-variance matrix.

    ``gs_two`` holds the moments at exponent 1 + 2*alpha and ``gs_one`` the
    centering moments at exponent 1 + alpha.
    """
    X = spec.X
    n = spec.n
    d_beta = gs_two.gamma11 - gs_one.gamma1 ** 2
    beta_block = (X.T * d_beta) @ X / n
    if not spec.estimate_scale:
        return beta_block
    d_cross = gs_two.gamma12 - gs_one.gamma1 * gs_one.gamma2
    d_scale = gs_two.gamma22 - gs_one.gamma2 ** 2
    cross = X.T @ d_cross / n
    scale_block = np.sum(d_scale) / n
    top = np.hstack([beta_block, cross[:, None]])
    bottom = np.hstack([cross, [scale_block]])
    return np.vstack([top, bottom[None, :]])


def sandwich(spec: ModelSpec, beta, phi, alpha) -> SandwichMatrices:
    """Evaluate psi, omega and the sandwich variance at given parameters.

    The sandwich is computed through a positive-definite solve of ``psi``;
    a singular curvature matrix raises :class:`InferenceError` so a fit can
    still be reported without standard errors.
    """
    eta = spec.eta(beta)
    fam = spec.family
    gs_one = fam.power_moments(eta, phi, alpha, y_obs=spec.y)
    gs_two = fam.power_moments(eta, phi, 2.0 * alpha, y_obs=spec.y)
    psi = build_psi(spec, gs_one)
    omega = build_omega(spec, gs_two, gs_one)
    psi = 0.5 * (psi + psi.T)
    omega = 0.5 * (omega + omega.T)
    try:
        chol = linalg.cho_factor(psi)
    except linalg.LinAlgError as exc:
        raise InferenceError(f"curvature matrix is singular: {exc}") from exc
    half = linalg.cho_solve(chol, omega)
    av = linalg.cho_solve(chol, half.T).T
    av = 0.5 * (av + av.T)
    return SandwichMatrices(
        psi=psi,
        omega=omega,
        av=av,
        condition_number=float(np.linalg.cond(psi)),
    )


@dataclass(frozen=True)
class WaldRow:
    coef: str
    estimate: float
    se: float
    statistic: float
    p_value: float


@dataclass(frozen=True)
class WaldTable:
    rows: list[WaldRow] = field(default_factory=list)
    df_convention: str = "t(n-p)"

    def as_dicts(self):
        return [
            {
                "coef": r.coef,
                "estimate": r.estimate,
                "se": r.se,
                "t": r.statistic,
                "p": r.p_value,
            }
            for r in self.rows
        ]


def wald_table(fit, n, p, names=None, reference="t") -> WaldTable:
    """Per-coefficient Wald tests.

    ``reference`` selects the null distribution of estimate/se: Student-t
    with n - p degrees of freedom (default) or the standard normal.
    """
    if fit.se is None:
        raise InferenceError("fit carries no standard errors")
    estimates = np.asarray(fit.beta_hat, dtype=float)
    se = np.asarray(fit.se[: estimates.size], dtype=float)
    if np.any(se == 0.0):
        raise DegenerateInferenceError("zero standard error in Wald table")
    if names is None:
        names = [f"x{j}" for j in range(estimates.size)]
    stat = estimates / se
    if reference == "t":
        pvals = 2.0 * stats.t.sf(np.abs(stat), df=n - p)
        convention = "t(n-p)"
    elif reference == "normal":
        pvals = 2.0 * stats.norm.sf(np.abs(stat))
        convention = "normal"
    else:
        raise ValueError(f"unknown reference {reference!r}")
    rows = [
        WaldRow(
            coef=str(names[j]),
            estimate=float(estimates[j]),
            se=float(se[j]),
            statistic=float(stat[j]),
            p_value=float(pvals[j]),
        )
        for j in range(estimates.size)
    ]
    return WaldTable(rows=rows, df_convention=convention)


def relative_efficiency(av_ref, av_alpha) -> np.ndarray:
    """Percentage efficiency of an estimator relative to the reference.

    Computed per coefficient as 100 * diag(av_ref) / diag(av_alpha); the
    reference is conventionally the maximum-likelihood sandwich.
    """
    ref = av_ref.av if isinstance(av_ref, SandwichMatrices) else np.asarray(av_ref)
    alt = av_alpha.av if isinstance(av_alpha, SandwichMatrices) else np.asarray(av_alpha)
    d_ref = np.diag(ref).astype(float)
    d_alt = np.diag(alt).astype(float)
    if d_ref.shape != d_alt.shape:
        raise InferenceError("sandwich matrices have mismatched dimensions")
    if np.any(d_alt <= 0.0):
        raise DegenerateInferenceError("nonpositive variance in efficiency ratio")
    return 100.0 * d_ref / d_alt
