"""Scikit-learn style front end for the robust GLM fitter.

``DensityPowerGLM`` wraps the functional core behind the familiar
``fit`` / ``predict`` / ``get_params`` surface so the estimator composes
with pipelines, grid search and the rest of the ecosystem.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .errors import InputError
from .families import make_family
from .inference import wald_table
from .model import ModelSpec
from .solver import SolverOptions, fit


class DensityPowerGLM(BaseEstimator):
    """Robust generalized linear model via density power divergence.

    Parameters
    ----------
    family : str, default="poisson"
        One of ``"poisson"``, ``"bernoulli"`` (alias ``"logistic"``),
        ``"binomial"`` (per-observation trials passed to :meth:`fit`) or
        ``"gaussian"``.
    alpha : float, default=0.5
        Robustness tuning parameter; 0 recovers maximum likelihood, larger
        values downweight observations that are improbable under the model.
    fit_intercept : bool, default=True
        Prepend a constant column to the design matrix.
    estimate_scale : bool, default=False
        Estimate the Gaussian variance jointly with the coefficients
        (free-scale families only).
    max_iter, grad_tol, step_tol :
        Solver controls; see :class:`~dpdglm.solver.SolverOptions`.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
        Fitted coefficients, excluding the intercept.
    intercept_ : float
        Fitted intercept (0.0 when ``fit_intercept=False``).
    scale_ : float or None
        Fitted scale for free-scale families.
    se_ : ndarray
        Sandwich standard errors for (intercept +) coefficients.
    vcov_ : ndarray
        Sandwich covariance of the estimates.
    results_ : FitResult
        Full solver output, including the convergence trace.
    """

    def __init__(self, family="poisson", alpha=0.5, fit_intercept=True,
                 estimate_scale=False, max_iter=200, grad_tol=1e-8,
                 step_tol=1e-10):
        self.family = family
        self.alpha = alpha
        self.fit_intercept = fit_intercept
        self.estimate_scale = estimate_scale
        self.max_iter = max_iter
        self.grad_tol = grad_tol
        self.step_tol = step_tol

    def fit(self, X, y, trials=None):
        """Fit the model to a design matrix and response vector.

        ``trials`` supplies per-observation trial counts for the binomial
        family and is ignored otherwise.
        """
        X, y = check_X_y(X, y, y_numeric=True)
        design = np.column_stack([np.ones(X.shape[0]), X]) if self.fit_intercept else X
        family = make_family(self.family, trials=trials)
        spec = ModelSpec(X=design, y=y, family=family,
                         estimate_scale=self.estimate_scale)
        options = SolverOptions(max_iter=self.max_iter, grad_tol=self.grad_tol,
                                step_tol=self.step_tol)
        result = fit(spec, float(self.alpha), options)
        self._spec = spec
        self.results_ = result
        self.n_features_in_ = X.shape[1]
        if self.fit_intercept:
            self.intercept_ = float(result.beta_hat[0])
            self.coef_ = result.beta_hat[1:].copy()
        else:
            self.intercept_ = 0.0
            self.coef_ = result.beta_hat.copy()
        self.scale_ = result.phi_hat
        self.vcov_ = result.vcov
        self.se_ = result.se
        self.n_iter_ = result.iterations
        return self

    def predict(self, X):
        """Predicted mean response (probability scale for binary models)."""
        check_is_fitted(self, "results_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise InputError(
                f"X has {X.shape[1]} features; expected {self.n_features_in_}"
            )
        eta = X @ self.coef_ + self.intercept_
        return np.asarray(self._spec.family.mean(eta))

    def decision_function(self, X):
        """Linear predictor values."""
        check_is_fitted(self, "results_")
        X = check_array(X)
        return X @ self.coef_ + self.intercept_

    def summary(self, names=None, reference="t"):
        """Wald table for the fitted coefficients."""
        check_is_fitted(self, "results_")
        spec = self._spec
        if names is None:
            names = ["intercept"] * self.fit_intercept + [
                f"x{j}" for j in range(self.n_features_in_)
            ]
        return wald_table(self.results_, spec.n, spec.p, names=names,
                          reference=reference)
