"""Density-power objective, estimating functions and the damped-Newton fitter.

The minimizer follows a Fisher-scoring analogue: the curvature matrix that
the asymptotics already require doubles as the Hessian model, with a
backtracking line search on the objective and a steepest-descent fallback.
Tuning-parameter paths are fitted by warm-started continuation from the
maximum-likelihood end of the family.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import ConvergenceError, DomainError, InferenceError, InputError
from .families import Bernoulli, Binomial, Gaussian, Poisson, _softplus
from .inference import build_psi, sandwich
from .model import ModelSpec

ARMIJO_C1 = 1e-4
MIN_STEP_FRACTION = 1e-14


@dataclass
class SolverOptions:
    max_iter: int = 200
    grad_tol: float = 1e-8
    step_tol: float = 1e-10
    cold_start: bool = False
    multistart: bool = False  # fit_path: probe extra basins, keep lowest objective


@dataclass(frozen=True)
class StartSource:
    """Where the optimizer started: a cold start (via the MLE) or a warm
    start from the optimum at a previous tuning-parameter value."""

    kind: str
    previous_alpha: float | None = None

    def __str__(self):
        if self.kind == "warm" and self.previous_alpha is not None:
            return f"warm(alpha={self.previous_alpha:g})"
        return self.kind


@dataclass
class FitResult:
    alpha: float
    beta_hat: np.ndarray
    phi_hat: float | None
    objective: float
    grad_norm: float
    vcov: np.ndarray | None
    se: np.ndarray | None
    iterations: int
    converged: bool
    start_source: StartSource
    trace: list = field(default_factory=list)

    @property
    def params(self) -> np.ndarray:
        if self.phi_hat is None:
            return np.asarray(self.beta_hat, dtype=float)
        return np.concatenate([self.beta_hat, [self.phi_hat]])


def objective(spec: ModelSpec, beta, phi=None, alpha: float = 0.0) -> float:
    """Empirical density-power objective.

    For ``alpha > 0`` this is the mean of ``integral(f^(1+alpha)) -
    (1 + 1/alpha) f(y)^alpha``; at ``alpha == 0`` it is the negative mean
    log-likelihood (the limiting objective up to an additive constant).
    """
    beta, phi = _resolve_params(spec, beta, phi)
    return _evaluate(spec, beta, phi, alpha, need_curvature=False).objective


def estimating_function(spec: ModelSpec, beta, phi=None, alpha: float = 0.0) -> np.ndarray:
    """Mean estimating function; the objective gradient equals
    ``(1 + alpha)`` times this vector, and it vanishes at the estimate."""
    beta, phi = _resolve_params(spec, beta, phi)
    return _evaluate(spec, beta, phi, alpha, need_curvature=False).grad


def fit(spec: ModelSpec, alpha: float, options: SolverOptions | None = None,
        start=None, start_source: StartSource | None = None) -> FitResult:
    """Minimize the density-power objective at one tuning-parameter value.

    Cold starts solve the maximum-likelihood problem first and continue from
    there; a caller may instead supply packed starting parameters.  Raises
    :class:`ConvergenceError` (carrying the iteration trace and the partial
    result) when the iteration limit is hit.
    """
    if alpha < 0:
        raise DomainError("alpha must be nonnegative")
    options = options or SolverOptions()
    if start is None:
        if alpha == 0.0:
            params0 = _default_start(spec)
        else:
            mle = fit(spec, 0.0, options)
            params0 = mle.params
        source = StartSource("cold")
    else:
        params0 = np.asarray(start, dtype=float).copy()
        source = start_source or StartSource("warm")
    return _newton(spec, alpha, params0, options, source)


def fit_path(spec: ModelSpec, alphas, options: SolverOptions | None = None) -> list[FitResult]:
    """Fit an ascending sequence of tuning parameters with warm starts."""
    alphas = [float(a) for a in alphas]
    if any(a < 0 for a in alphas):
        raise DomainError("alpha values must be nonnegative")
    if any(b < a for a, b in zip(alphas, alphas[1:])):
        raise DomainError("alpha path must be sorted ascending")
    options = options or SolverOptions()
    results: list[FitResult] = []
    prev: FitResult | None = None
    for a in alphas:
        try:
            if prev is None or options.cold_start:
                res = fit(spec, a, options)
            else:
                res = fit(
                    spec, a, options,
                    start=prev.params,
                    start_source=StartSource("warm", prev.alpha),
                )
            if options.multistart and a > 0:
                res = _best_root(spec, a, options, res)
        except ConvergenceError as exc:
            err = ConvergenceError(
                f"path fit failed at alpha={a:g}: {exc}", trace=exc.trace
            )
            if hasattr(exc, "result"):
                err.result = exc.result
            err.completed = results
            raise err from exc
        results.append(res)
        prev = res
    return results


def _best_root(spec: ModelSpec, a: float, options: SolverOptions,
               incumbent: FitResult) -> FitResult:
    """Probe additional basins of the objective and keep the lowest root.

    The estimating equations can have several roots once the divergence
    downweights aggressively; besides the continuation root this tries a
    restart from the plain MLE and from an MLE refitted without the
    observations the incumbent root has already rejected (density-power
    weight below 1% of the largest).  Candidates never look at anything
    but the data and the objective.
    """
    candidates = [incumbent]
    try:
        candidates.append(fit(spec, a, options))
    except ConvergenceError:
        pass
    beta, phi = spec.split_params(incumbent.params)
    w = np.exp(a * spec.family.log_density(spec.y, spec.eta(beta), phi))
    keep = w > 0.01 * float(np.max(w))
    if keep.sum() >= spec.n_params + 1 and not np.all(keep):
        try:
            sub_family = spec.family
            if isinstance(sub_family, Binomial):
                sub_family = Binomial(sub_family.trials[keep])
            sub = ModelSpec(
                X=spec.X[keep], y=spec.y[keep], family=sub_family,
                estimate_scale=spec.estimate_scale, phi_value=spec.phi_value,
            )
            trimmed = fit(sub, 0.0, options)
            candidates.append(
                fit(spec, a, options, start=trimmed.params,
                    start_source=StartSource("warm", 0.0))
            )
        except (ConvergenceError, InputError, DomainError, InferenceError):
            pass
    return min(candidates, key=lambda r: r.objective)


def bernoulli_estimating_simplified(spec: ModelSpec, beta, alpha: float) -> np.ndarray:
    """Algebraically reduced form of the binary-response estimating function.

    Mathematically identical to :func:`estimating_function` for the
    Bernoulli family; kept as an independent formula for cross-checking.
    """
    if not isinstance(spec.family, Bernoulli):
        raise DomainError("simplified form applies to the Bernoulli family only")
    eta = spec.eta(beta)
    y = spec.y
    log_term = eta * (1.0 - y) + np.logaddexp(alpha * eta, eta) - (2.0 + alpha) * _softplus(eta)
    terms = (1.0 - 2.0 * y) * np.exp(log_term)
    return spec.X.T @ terms / spec.n


# ---------------------------------------------------------------------------
# internals


@dataclass
class _Eval:
    objective: float
    grad: np.ndarray
    psi: np.ndarray | None
    hessian: np.ndarray | None = None


def _resolve_params(spec, beta, phi):
    beta = np.asarray(beta, dtype=float)
    if spec.estimate_scale:
        if phi is None:
            raise DomainError("free-scale model requires a scale value")
        return beta, float(phi)
    return beta, spec.phi_value


def _evaluate(spec: ModelSpec, beta, phi, alpha, need_curvature=True) -> _Eval:
    fam = spec.family
    eta = spec.eta(beta)
    if not np.all(np.isfinite(eta)):
        raise DomainError("linear predictor overflow")
    gs = fam.power_moments(eta, phi, alpha, y_obs=spec.y)
    log_f = fam.log_density(spec.y, eta, phi)
    n = spec.n
    if alpha == 0.0:
        obj = -float(np.mean(log_f))
        w = np.ones(n)
    else:
        w = np.exp(alpha * log_f)
        obj = float(np.mean(gs.integral - (1.0 + 1.0 / alpha) * w))
    if not np.isfinite(obj):
        raise DomainError("objective overflow")
    k1 = fam.k1(spec.y, eta, phi)
    grad_beta = spec.X.T @ (gs.gamma1 - k1 * w) / n
    if spec.estimate_scale:
        k2 = fam.k2(spec.y, eta, phi)
        grad_phi = float(np.sum(gs.gamma2 - k2 * w) / n)
        grad = np.concatenate([grad_beta, [grad_phi]])
    else:
        grad = grad_beta
    psi = build_psi(spec, gs) if need_curvature else None
    hessian = None
    if need_curvature and not spec.estimate_scale:
        # Exact objective Hessian for fixed-scale families: every piece is
        # already evaluated, so full Newton steps come for free.
        order = 1.0 + alpha
        bpp = fam.b_double_prime(eta) / fam.a(phi)
        diag = order * gs.gamma11 + bpp * (w - gs.integral) - alpha * w * k1 * k1
        hessian = order * (spec.X.T * diag) @ spec.X / n
    return _Eval(objective=obj, grad=grad, psi=psi, hessian=hessian)


def _default_start(spec: ModelSpec) -> np.ndarray:
    """Least-squares regression of the link-transformed response."""
    fam = spec.family
    y = spec.y
    if isinstance(fam, Gaussian):
        beta, *_ = np.linalg.lstsq(spec.X, y, rcond=None)
        if spec.estimate_scale:
            resid = y - spec.X @ beta
            phi0 = max(float(np.mean(resid ** 2)), 1e-8)
            return np.concatenate([beta, [phi0]])
        return beta
    if isinstance(fam, Poisson):
        z = np.log(y + 0.5)
    elif isinstance(fam, Binomial):
        m = fam.trials.astype(float)
        pi0 = (y + 0.5) / (m + 1.0)
        z = np.log(pi0 / (1.0 - pi0))
    elif isinstance(fam, Bernoulli):
        pi0 = (y + 0.5) / 2.0
        z = np.log(pi0 / (1.0 - pi0))
    else:  # pragma: no cover - unknown family
        z = y.astype(float)
    beta, *_ = np.linalg.lstsq(spec.X, z, rcond=None)
    return beta


def _newton(spec: ModelSpec, alpha, params0, options: SolverOptions,
            source: StartSource) -> FitResult:
    params = np.asarray(params0, dtype=float).copy()
    try:
        state = _evaluate(spec, *spec.split_params(params), alpha)
    except (DomainError, ConvergenceError) as exc:
        raise ConvergenceError(f"infeasible starting point: {exc}") from exc

    trace: list[dict] = []
    converged = False
    step_norm = np.inf
    iterations = 0

    for _ in range(options.max_iter):
        gnorm = float(np.max(np.abs(state.grad)))
        gtol = options.grad_tol * (1.0 + abs(state.objective))
        trace.append(
            {"iteration": iterations, "objective": state.objective,
             "grad_norm": gnorm, "step_norm": float(step_norm)}
        )
        if gnorm < gtol and step_norm < options.step_tol:
            converged = True
            break

        delta = _direction(state, alpha)
        if gnorm < gtol and float(np.max(np.abs(delta))) < options.step_tol:
            converged = True
            break

        slope = (1.0 + alpha) * float(state.grad @ delta)
        if not np.isfinite(slope) or slope >= 0.0:
            delta = -state.grad
            slope = -(1.0 + alpha) * float(state.grad @ state.grad)

        new_params, new_state, step_norm = _line_search(
            spec, alpha, params, state, delta, slope
        )
        iterations += 1
        if new_state is None:
            # No decrease possible along the model direction: accept the
            # point as stationary when the gradient criterion already holds.
            converged = gnorm < gtol
            step_norm = 0.0
            break
        params, state = new_params, new_state

    gnorm = float(np.max(np.abs(state.grad)))
    beta_hat, phi = spec.split_params(params)
    result = FitResult(
        alpha=float(alpha),
        beta_hat=beta_hat.copy(),
        phi_hat=phi if spec.estimate_scale else None,
        objective=state.objective,
        grad_norm=gnorm,
        vcov=None,
        se=None,
        iterations=iterations,
        converged=converged,
        start_source=source,
        trace=trace,
    )
    try:
        sw = sandwich(spec, beta_hat, phi, alpha)
        result.vcov = sw.av / spec.n
        result.se = np.sqrt(np.clip(np.diag(result.vcov), 0.0, None))
    except InferenceError:
        result.vcov = None
        result.se = None

    if not converged:
        reason = (
            "line search stalled" if iterations < options.max_iter
            else f"iteration limit {options.max_iter} reached"
        )
        err = ConvergenceError(
            f"no convergence at alpha={alpha:g}: {reason} after "
            f"{iterations} iterations (grad_norm={gnorm:.3e})",
            trace=trace,
        )
        err.result = result
        raise err
    return result


def _direction(state: _Eval, alpha: float) -> np.ndarray:
    """Newton direction: exact Hessian when positive definite, a
    Levenberg-damped Hessian when indefinite, then the curvature matrix
    (Fisher-scoring analogue), then steepest descent."""
    if state.hessian is not None:
        hess = state.hessian
        scale = float(np.max(np.abs(np.diag(hess)))) or 1.0
        lam = 0.0
        for _ in range(8):
            try:
                chol = linalg.cho_factor(hess + lam * np.eye(hess.shape[0]))
                return linalg.cho_solve(chol, -(1.0 + alpha) * state.grad)
            except linalg.LinAlgError:
                lam = max(2.0 * lam, 1e-10 * scale)
                lam *= 100.0
    try:
        chol = linalg.cho_factor(state.psi)
        return linalg.cho_solve(chol, -state.grad)
    except linalg.LinAlgError:
        return -state.grad


def _line_search(spec, alpha, params, state, delta, slope):
    # The noise slack admits polishing steps whose objective change falls
    # below the floating-point noise of the moment sums, provided the
    # gradient contracts geometrically; without it Newton stalls just above
    # tight tolerances.  The contraction requirement rules out cycling.
    noise_slack = 1e-10 * (1.0 + abs(state.objective))
    gnorm = float(np.max(np.abs(state.grad)))
    t = 1.0
    while t >= MIN_STEP_FRACTION:
        trial = params + t * delta
        try:
            trial_state = _evaluate(spec, *spec.split_params(trial), alpha)
        except (DomainError, ConvergenceError):
            t *= 0.5
            continue
        armijo = (
            trial_state.objective <= state.objective + ARMIJO_C1 * t * slope
            and trial_state.objective < state.objective
        )
        polish = (
            trial_state.objective <= state.objective + noise_slack
            and float(np.max(np.abs(trial_state.grad))) <= 0.9 * gnorm
        )
        if armijo or polish:
            return trial, trial_state, float(np.max(np.abs(t * delta)))
        t *= 0.5
    return params, None, 0.0
