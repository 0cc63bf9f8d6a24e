"""Exponential-family GLM densities and their density-power moment functionals.

Each family evaluates, besides the usual link/mean/variance machinery, the
weighted moments of its score functions under the density raised to a power
``1 + alpha``:

* ``gamma1``  -- first moment of the location score ``K1``
* ``gamma2``  -- first moment of the scale score ``K2`` (free-scale only)
* ``gamma11``, ``gamma12``, ``gamma22`` -- second-order moments

These quantities drive the robust estimating equations, the sandwich
curvature matrices and the influence diagnostics.  All evaluators are pure
and vectorized over observations.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import ConvergenceError, DomainError, UnsupportedOperationError

# Truncation policy for the Poisson power series.
POISSON_UPPER_SIGMA = 12.0
POISSON_LOWER_SIGMA = 15.0
POISSON_PAD = 30
POISSON_MAX_TERMS = 10 ** 6
POISSON_TAIL_RTOL = 1e-16


def _softplus(x):
    """log(1 + exp(x)) without overflow."""
    return np.logaddexp(0.0, x)


@dataclass(frozen=True)
class GammaSet:
    """Per-observation density-power moments at exponent ``order = 1 + alpha``.

    ``gamma2``, ``gamma12`` and ``gamma22`` are ``None`` for fixed-scale
    families.  ``integral`` is the normalizing power integral of the density
    at the same exponent (1 for ``alpha == 0``).
    """

    gamma1: np.ndarray
    gamma11: np.ndarray
    integral: np.ndarray
    order: float
    gamma2: np.ndarray | None = None
    gamma12: np.ndarray | None = None
    gamma22: np.ndarray | None = None


class Family(ABC):
    """Exponential-family descriptor with canonical link.

    The density is ``exp{(y*theta - b(theta))/a(phi) + c(y, phi)}`` with
    ``theta`` equal to the linear predictor (all links here are canonical),
    mean ``b'(theta)`` and variance ``b''(theta) * a(phi)``.
    """

    name: str
    link_name: str
    support: str
    scale_fixed: bool = True

    # -- canonical-parameter structure -------------------------------------

    @abstractmethod
    def b(self, theta):
        """Cumulant function."""

    @abstractmethod
    def mean(self, eta):
        """Mean response b'(eta) under the canonical link."""

    @abstractmethod
    def b_double_prime(self, eta):
        """Second cumulant derivative (variance function on the theta scale)."""

    @abstractmethod
    def c(self, y, phi):
        """Normalizing term of the log density."""

    def a(self, phi):
        """Scale factor; identically 1 for fixed-scale families."""
        return np.ones_like(np.asarray(phi, dtype=float))

    @abstractmethod
    def link(self, mu):
        """Link g with g(mean(eta)) == eta."""

    @abstractmethod
    def link_deriv(self, mu):
        """Derivative g'(mu)."""

    @abstractmethod
    def validate_y(self, y):
        """Raise DomainError unless every y lies in the family support."""

    def variance(self, eta, phi=1.0):
        return self.b_double_prime(eta) * self.a(phi)

    # -- densities and scores ----------------------------------------------

    def log_density(self, y, eta, phi=1.0):
        y = np.asarray(y, dtype=float)
        eta = np.asarray(eta, dtype=float)
        if not np.all(np.isfinite(eta)):
            raise DomainError("non-finite canonical parameter")
        self.validate_y(y)
        return (y * eta - self.b(eta)) / self.a(phi) + self.c(y, phi)

    def density(self, y, eta, phi=1.0):
        """Probability mass / density of y at linear predictor eta."""
        return np.exp(self.log_density(y, eta, phi))

    def k1(self, y, eta, phi=1.0):
        """Location-score factor: grad_beta log f = k1(y) * x.

        Equals (y - mu) / (Var(y) * g'(mu)); under the canonical link this
        reduces to (y - mu) / a(phi).
        """
        y = np.asarray(y, dtype=float)
        var = self.variance(eta, phi)
        if np.any(var <= 0.0) or not np.all(np.isfinite(var)):
            raise DomainError("degenerate variance at the requested parameters")
        return (y - self.mean(eta)) / self.a(phi)

    def k2(self, y, eta, phi):
        """Scale score; only defined when the scale is free."""
        raise UnsupportedOperationError(
            f"family {self.name!r} has fixed scale; no scale score exists"
        )

    def pointwise_weight(self, y, eta, phi, alpha):
        """f(y)^alpha, computed in log space."""
        if alpha == 0.0:
            return np.ones_like(np.asarray(eta, dtype=float))
        return np.exp(alpha * self.log_density(y, eta, phi))

    # -- density-power moments ----------------------------------------------

    @abstractmethod
    def power_moments(self, eta, phi, alpha, y_obs=None) -> GammaSet:
        """All gamma moments and the power integral at exponent 1 + alpha."""

    def gamma_set(self, eta, phi, alpha, y_obs=None) -> GammaSet:
        if alpha < 0.0:
            raise DomainError("alpha must be nonnegative")
        return self.power_moments(eta, phi, alpha, y_obs=y_obs)

    def integral_f_power(self, eta, phi, alpha):
        """Integral (or sum) of f^(1+alpha) over the support."""
        if alpha < 0.0:
            raise DomainError("alpha must be nonnegative")
        return self.power_moments(eta, phi, alpha).integral


class Poisson(Family):
    """Poisson counts with log link; theta = eta, b(theta) = exp(theta)."""

    name = "poisson"
    link_name = "log"
    support = "nonnegative integers"
    scale_fixed = True

    def b(self, theta):
        return np.exp(theta)

    def mean(self, eta):
        return np.exp(np.asarray(eta, dtype=float))

    def b_double_prime(self, eta):
        return np.exp(eta)

    def c(self, y, phi):
        return -gammaln(y + 1.0)

    def link(self, mu):
        mu = np.asarray(mu, dtype=float)
        if np.any(mu <= 0):
            raise DomainError("log link requires a positive mean")
        return np.log(mu)

    def link_deriv(self, mu):
        return 1.0 / np.asarray(mu, dtype=float)

    def validate_y(self, y):
        y = np.asarray(y, dtype=float)
        if np.any(y < 0) or np.any(y != np.floor(y)) or not np.all(np.isfinite(y)):
            raise DomainError("Poisson support is the nonnegative integers")

    def power_moments(self, eta, phi, alpha, y_obs=None) -> GammaSet:
        eta = np.atleast_1d(np.asarray(eta, dtype=float))
        with np.errstate(over="ignore"):
            mu = np.exp(eta)
        if not np.all(np.isfinite(mu)):
            raise DomainError("Poisson mean overflow")
        if np.any(mu > 2e9):
            # The summation window would exceed the term cap.
            raise ConvergenceError(
                "Poisson power series needs too many terms "
                f"(mean up to {float(np.max(mu)):.3g})",
                tail_bound=float("nan"),
            )
        order = 1.0 + alpha
        if alpha == 0.0:
            # Exact: the series telescopes to the plain Poisson moments.
            return GammaSet(
                gamma1=np.zeros_like(mu),
                gamma11=mu.copy(),
                integral=np.ones_like(mu),
                order=order,
            )

        root = np.sqrt(mu)
        hi = np.ceil(mu + POISSON_UPPER_SIGMA * root + POISSON_PAD).astype(np.int64)
        if y_obs is not None:
            hi = np.maximum(hi, np.atleast_1d(np.asarray(y_obs)).astype(np.int64) + 10)
        # Terms below mu - 15*sqrt(mu) - 30 are smaller than e^-100 relative
        # to the bulk; skipping them leaves the sums unchanged at 1e-12.
        lo = np.maximum(
            0, np.floor(mu - POISSON_LOWER_SIGMA * root - POISSON_PAD).astype(np.int64)
        )

        counts = hi - lo + 1
        if np.any(counts > POISSON_MAX_TERMS):
            worst = int(np.max(counts))
            raise ConvergenceError(
                f"Poisson power series needs {worst} terms (cap {POISSON_MAX_TERMS})",
                tail_bound=float("nan"),
            )
        offsets = np.concatenate(([0], np.cumsum(counts)))
        total = int(offsets[-1])
        idx = np.repeat(np.arange(mu.size), counts)
        y_flat = np.arange(total, dtype=np.int64) - np.repeat(offsets[:-1], counts)
        y_flat = y_flat + lo[idx]
        yf = y_flat.astype(float)

        log_f = yf * eta[idx] - mu[idx] - gammaln(yf + 1.0)
        w = np.exp(order * log_f)
        dev = yf - mu[idx]
        integral = np.bincount(idx, weights=w, minlength=mu.size)
        gamma1 = np.bincount(idx, weights=w * dev, minlength=mu.size)
        gamma11 = np.bincount(idx, weights=w * dev * dev, minlength=mu.size)

        # Adaptive extension: the last ten terms must each be negligible
        # relative to the running power integral.  The vectorized check
        # almost never triggers the per-observation extension below.
        tail_pos = (offsets[1:] - 1)[:, None] - np.arange(10)[None, :]
        tail_pos = np.maximum(tail_pos, offsets[:-1][:, None])
        tail_max = w[tail_pos].max(axis=1)
        for i in np.nonzero(tail_max >= POISSON_TAIL_RTOL * integral)[0]:
            tail_hi = int(hi[i])
            bound = float(tail_max[i])
            while bound >= POISSON_TAIL_RTOL * integral[i]:
                if tail_hi - lo[i] + 1 >= POISSON_MAX_TERMS:
                    raise ConvergenceError(
                        "Poisson power series truncation did not reach tolerance",
                        tail_bound=bound / max(integral[i], 1e-300),
                    )
                ext = np.arange(tail_hi + 1, tail_hi + 257, dtype=float)
                ext_w = np.exp(order * (ext * eta[i] - mu[i] - gammaln(ext + 1.0)))
                ext_dev = ext - mu[i]
                integral[i] += ext_w.sum()
                gamma1[i] += (ext_w * ext_dev).sum()
                gamma11[i] += (ext_w * ext_dev * ext_dev).sum()
                tail_hi += 256
                bound = float(ext_w[-10:].max())

        return GammaSet(gamma1=gamma1, gamma11=gamma11, integral=integral, order=order)


class Bernoulli(Family):
    """Binary response with logit link; b(theta) = log(1 + exp(theta))."""

    name = "bernoulli"
    link_name = "logit"
    support = "{0, 1}"
    scale_fixed = True

    def b(self, theta):
        return _softplus(theta)

    def mean(self, eta):
        eta = np.asarray(eta, dtype=float)
        return np.exp(-_softplus(-eta))

    def b_double_prime(self, eta):
        mu = self.mean(eta)
        return mu * (1.0 - mu)

    def c(self, y, phi):
        return np.zeros_like(np.asarray(y, dtype=float))

    def link(self, mu):
        mu = np.asarray(mu, dtype=float)
        if np.any(mu <= 0) or np.any(mu >= 1):
            raise DomainError("logit link requires a mean in (0, 1)")
        return np.log(mu / (1.0 - mu))

    def link_deriv(self, mu):
        mu = np.asarray(mu, dtype=float)
        return 1.0 / (mu * (1.0 - mu))

    def validate_y(self, y):
        y = np.asarray(y, dtype=float)
        if not np.all(np.isin(y, (0.0, 1.0))):
            raise DomainError("Bernoulli support is {0, 1}")

    def power_moments(self, eta, phi, alpha, y_obs=None) -> GammaSet:
        eta = np.atleast_1d(np.asarray(eta, dtype=float))
        order = 1.0 + alpha
        log_mu = -_softplus(-eta)
        log_1m = -_softplus(eta)
        integral = np.exp(order * log_mu) + np.exp(order * log_1m)
        # gamma1 = e^eta (e^(alpha eta) - 1) / (1 + e^eta)^(2 + alpha)
        u = alpha * eta
        with np.errstate(divide="ignore"):
            log_em1 = np.where(
                u > 0.0, u + np.log1p(-np.exp(-np.abs(u))), np.log1p(-np.exp(-np.abs(u)))
            )
        sp = _softplus(eta)
        gamma1 = np.sign(u) * np.exp(eta + log_em1 - (2.0 + alpha) * sp)
        gamma1 = np.where(u == 0.0, 0.0, gamma1)
        # gamma11 = e^eta (e^(alpha eta) + e^eta) / (1 + e^eta)^(3 + alpha)
        gamma11 = np.exp(eta + np.logaddexp(u, eta) - (3.0 + alpha) * sp)
        return GammaSet(gamma1=gamma1, gamma11=gamma11, integral=integral, order=order)


class Binomial(Family):
    """Grouped binomial counts with logit link on the success probability.

    Each observation carries its own number of trials; the observation is a
    single binomial draw with support 0..m, so b(theta) = m*log(1+exp(theta))
    and the power moments are exact finite sums.
    """

    name = "binomial"
    link_name = "logit"
    support = "integers 0..m"
    scale_fixed = True

    def __init__(self, trials):
        trials = np.atleast_1d(np.asarray(trials))
        if np.any(trials <= 0) or np.any(trials != np.floor(trials)):
            raise DomainError("binomial trial counts must be positive integers")
        self.trials = trials.astype(np.int64)

    def b(self, theta):
        return self.trials * _softplus(theta)

    def mean(self, eta):
        eta = np.asarray(eta, dtype=float)
        return self.trials * np.exp(-_softplus(-eta))

    def b_double_prime(self, eta):
        pi = np.exp(-_softplus(-np.asarray(eta, dtype=float)))
        return self.trials * pi * (1.0 - pi)

    def c(self, y, phi):
        y = np.asarray(y, dtype=float)
        m = self.trials
        return gammaln(m + 1.0) - gammaln(y + 1.0) - gammaln(m - y + 1.0)

    def link(self, mu):
        mu = np.asarray(mu, dtype=float)
        if np.any(mu <= 0) or np.any(mu >= self.trials):
            raise DomainError("logit link requires a mean strictly inside (0, m)")
        return np.log(mu / (self.trials - mu))

    def link_deriv(self, mu):
        mu = np.asarray(mu, dtype=float)
        return self.trials / (mu * (self.trials - mu))

    def validate_y(self, y):
        y = np.asarray(y, dtype=float)
        if (
            np.any(y < 0)
            or np.any(y != np.floor(y))
            or np.any(y > self.trials)
            or not np.all(np.isfinite(y))
        ):
            raise DomainError("binomial support is the integers 0..m")

    def power_moments(self, eta, phi, alpha, y_obs=None) -> GammaSet:
        eta = np.atleast_1d(np.asarray(eta, dtype=float))
        order = 1.0 + alpha
        m = self.trials
        if alpha == 0.0:
            pi = np.exp(-_softplus(-eta))
            return GammaSet(
                gamma1=np.zeros_like(eta),
                gamma11=m * pi * (1.0 - pi),
                integral=np.ones_like(eta),
                order=order,
            )
        m_max = int(np.max(m))
        grid = np.arange(m_max + 1, dtype=float)[:, None]  # (m_max+1, n)
        log_f = (
            gammaln(m + 1.0)
            - gammaln(grid + 1.0)
            - gammaln(m - grid + 1.0)
            + grid * eta
            - m * _softplus(eta)
        )
        valid = grid <= m
        w = np.where(valid, np.exp(order * np.where(valid, log_f, 0.0)), 0.0)
        dev = np.where(valid, grid - m * np.exp(-_softplus(-eta)), 0.0)
        integral = w.sum(axis=0)
        gamma1 = (w * dev).sum(axis=0)
        gamma11 = (w * dev * dev).sum(axis=0)
        return GammaSet(gamma1=gamma1, gamma11=gamma11, integral=integral, order=order)


class Gaussian(Family):
    """Normal linear model; identity link, free scale phi = variance.

    Included as an analytic fixture: every power moment has a closed form,
    and the power integral does not depend on the location parameter.
    """

    name = "gaussian"
    link_name = "identity"
    support = "reals"
    scale_fixed = False

    def b(self, theta):
        return 0.5 * np.asarray(theta, dtype=float) ** 2

    def mean(self, eta):
        return np.asarray(eta, dtype=float)

    def b_double_prime(self, eta):
        return np.ones_like(np.asarray(eta, dtype=float))

    def c(self, y, phi):
        y = np.asarray(y, dtype=float)
        return -0.5 * y * y / phi - 0.5 * np.log(2.0 * np.pi * phi)

    def a(self, phi):
        phi = np.asarray(phi, dtype=float)
        if np.any(phi <= 0):
            raise DomainError("scale must be positive")
        return phi

    def link(self, mu):
        return np.asarray(mu, dtype=float)

    def link_deriv(self, mu):
        return np.ones_like(np.asarray(mu, dtype=float))

    def validate_y(self, y):
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise DomainError("Gaussian responses must be finite")

    def k2(self, y, eta, phi):
        """Scale score: (y - mu)^2 / (2 phi^2) - 1 / (2 phi)."""
        if phi <= 0:
            raise DomainError("scale must be positive")
        resid = np.asarray(y, dtype=float) - self.mean(eta)
        return resid * resid / (2.0 * phi * phi) - 0.5 / phi

    def power_moments(self, eta, phi, alpha, y_obs=None) -> GammaSet:
        eta = np.atleast_1d(np.asarray(eta, dtype=float))
        if phi <= 0:
            raise DomainError("scale must be positive")
        order = 1.0 + alpha
        integral_scalar = (2.0 * math.pi * phi) ** (-alpha / 2.0) / math.sqrt(order)
        ones = np.ones_like(eta)
        integral = integral_scalar * ones
        gamma11 = integral_scalar / (phi * order) * ones
        gamma2 = -integral_scalar * alpha / (2.0 * phi * order) * ones
        gamma22 = (
            integral_scalar
            / (4.0 * phi * phi)
            * (3.0 / order ** 2 - 2.0 / order + 1.0)
            * ones
        )
        return GammaSet(
            gamma1=np.zeros_like(eta),
            gamma11=gamma11,
            integral=integral,
            order=order,
            gamma2=gamma2,
            gamma12=np.zeros_like(eta),
            gamma22=gamma22,
        )


def make_family(name, trials=None):
    """Family factory used by model builders and the CLI."""
    key = name.lower()
    if key == "poisson":
        return Poisson()
    if key in ("bernoulli", "logistic"):
        return Bernoulli()
    if key == "binomial":
        if trials is None:
            raise DomainError("binomial family requires trial counts")
        return Binomial(trials)
    if key in ("gaussian", "normal"):
        return Gaussian()
    raise DomainError(f"unknown family {name!r}")
