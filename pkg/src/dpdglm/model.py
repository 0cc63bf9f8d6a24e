"""Model specification: design matrix, response, family, scale handling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .families import Binomial, Family


@dataclass
class ModelSpec:
    """A fixed-design GLM data set ready for robust fitting.

    ``estimate_scale`` may only be set for free-scale families; otherwise the
    scale is pinned at ``phi_value`` (1 for the discrete families).
    """

    X: np.ndarray
    y: np.ndarray
    family: Family
    estimate_scale: bool = False
    phi_value: float = 1.0
    column_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=float).ravel()
        n, p = self.X.shape
        if n < p or p < 1:
            raise InputError(f"need n >= p >= 1, got n={n}, p={p}")
        if self.y.shape[0] != n:
            raise InputError("response length does not match the design matrix")
        if not np.all(np.isfinite(self.X)):
            raise InputError("design matrix contains non-finite entries")
        rank = np.linalg.matrix_rank(self.X)
        if rank < p:
            raise InputError(f"design matrix is rank deficient (rank {rank} < {p})")
        if isinstance(self.family, Binomial):
            if self.family.trials.shape[0] != n:
                raise InputError("binomial trial counts must match the sample size")
        self.family.validate_y(self.y)
        if self.estimate_scale and self.family.scale_fixed:
            raise InputError(
                f"family {self.family.name!r} has a fixed scale; cannot estimate it"
            )
        if self.phi_value <= 0:
            raise InputError("scale must be positive")
        if not self.column_names:
            self.column_names = [f"x{j}" for j in range(p)]
        elif len(self.column_names) != p:
            raise InputError("column_names length does not match the design matrix")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def n_params(self) -> int:
        """Number of estimated parameters (p, plus one if the scale is free)."""
        return self.p + (1 if self.estimate_scale else 0)

    @property
    def trials(self):
        return self.family.trials if isinstance(self.family, Binomial) else None

    def eta(self, beta) -> np.ndarray:
        return self.X @ np.asarray(beta, dtype=float)

    def split_params(self, params):
        """Split a packed parameter vector into (beta, phi)."""
        params = np.asarray(params, dtype=float)
        if self.estimate_scale:
            return params[:-1], float(params[-1])
        return params, self.phi_value

    def pack_params(self, beta, phi=None):
        beta = np.asarray(beta, dtype=float)
        if self.estimate_scale:
            if phi is None:
                raise InputError("free-scale model requires a scale value")
            return np.concatenate([beta, [float(phi)]])
        return beta.copy()
