"""Influence curves, sensitivities and the plotting export."""

import numpy as np
import pytest

from dpdglm.families import Bernoulli, Gaussian, Poisson
from dpdglm.influence import (default_grid, influence, influence_grid_export,
                              influence_report, sensitivities,
                              write_influence_csv)
from dpdglm.model import ModelSpec
from dpdglm.solver import FitResult, StartSource, fit

from conftest import small_bernoulli_spec, small_poisson_spec


def eval_point(spec, alpha, beta, phi=None):
    """Synthetic fit result at hypothesised parameters."""
    return FitResult(alpha=alpha, beta_hat=np.asarray(beta, dtype=float),
                     phi_hat=phi, objective=0.0, grad_norm=0.0, vcov=None,
                     se=None, iterations=0, converged=True,
                     start_source=StartSource("cold"))


def model_one(n=50):
    i = np.arange(1, n + 1, dtype=float)
    X = np.column_stack([np.ones(n), np.sqrt(i)])
    beta = np.array([1.0, 1.0])
    y = np.round(np.exp(X @ beta))
    return ModelSpec(X=X, y=y, family=Poisson()), beta


class TestInfluence:
    def test_alpha_zero_linear_in_t(self):
        spec, beta = model_one()
        pt = eval_point(spec, 0.0, beta)
        ts = np.array([0.0, 5.0, 10.0])
        vals = influence(spec, pt, 1, ts)
        slope1 = (vals[1] - vals[0]) / 5.0
        slope2 = (vals[2] - vals[1]) / 5.0
        assert np.allclose(slope1, slope2, atol=1e-12)

    def test_gaussian_bracket_root_gives_zero(self):
        rng = np.random.default_rng(8)
        X = np.column_stack([np.ones(20), rng.normal(size=20)])
        spec = ModelSpec(X=X, y=X @ [0.5, 1.0], family=Gaussian(),
                         estimate_scale=False, phi_value=1.0)
        beta = np.array([0.5, 1.0])
        pt = eval_point(spec, 0.4, beta)
        mu_3 = float(spec.X[2] @ beta)
        val = influence(spec, pt, 3, mu_3)
        assert np.max(np.abs(val)) < 1e-14

    @staticmethod
    def _asymptote(spec, beta, alpha, i0):
        # limit of the influence vector as the contamination point grows:
        # the weighted score decays, leaving the centering term
        from scipy import linalg
        from dpdglm.influence import _psi_omega
        psi, _ = _psi_omega(spec, beta, 1.0, alpha)
        gs = spec.family.power_moments(spec.eta(beta), 1.0, alpha, y_obs=spec.y)
        return -linalg.solve(psi, gs.gamma1[i0 - 1] * spec.X[i0 - 1]) / spec.n

    def test_redescends_far_out(self):
        spec, beta = model_one()
        pt = eval_point(spec, 0.5, beta)
        ts = np.arange(0.0, 61.0)
        vals = influence(spec, pt, 1, ts)
        norms = np.sqrt((vals ** 2).sum(axis=1))
        resid = vals - self._asymptote(spec, beta, 0.5, 1)
        assert np.sqrt((resid[-1] ** 2).sum()) < 1e-6 * norms.max()

    def test_boundedness_dichotomy(self):
        spec, beta = model_one()
        for alpha in (0.25, 0.5, 1.0):
            pt = eval_point(spec, alpha, beta)
            rep = influence_report(spec, pt, 1)
            norms = np.sqrt((rep.if_values ** 2).sum(axis=1))
            k = int(np.argmax(norms))
            assert 0 < k < len(norms) - 1
            # bounded: the far tail has settled onto its finite asymptote
            resid = rep.if_values - self._asymptote(spec, beta, alpha, 1)
            assert np.sqrt((resid[-1] ** 2).sum()) < 1e-3 * norms[k]
            assert norms[-1] < norms[k]
        pt0 = eval_point(spec, 0.0, beta)
        rep0 = influence_report(spec, pt0, 1)
        norms0 = np.sqrt((rep0.if_values ** 2).sum(axis=1))
        assert norms0[-1] > np.max(norms0[:-1]) - 1e-12

    def test_direction_bounds(self):
        spec, beta = model_one()
        pt = eval_point(spec, 0.5, beta)
        from dpdglm.errors import DomainError
        with pytest.raises(DomainError):
            influence(spec, pt, 0, 1.0)
        with pytest.raises(DomainError):
            influence(spec, pt, spec.n + 1, 1.0)


class TestSensitivities:
    def test_alpha_zero_unbounded_support_is_infinite(self):
        spec, beta = model_one()
        ge, ss = sensitivities(spec, eval_point(spec, 0.0, beta), 1)
        assert np.isinf(ge) and np.isinf(ss)

    def test_binary_support_finite_even_at_alpha_zero(self):
        spec = small_bernoulli_spec()
        res = fit(spec, 0.0)
        ge, ss = sensitivities(spec, res, 1)
        assert np.isfinite(ge) and np.isfinite(ss)

    def test_grid_refinement_stability(self):
        spec, beta = model_one()
        pt = eval_point(spec, 0.5, beta)
        base = default_grid(spec, pt, 1)
        ge1, ss1 = sensitivities(spec, pt, 1, grid=base)
        doubled = np.arange(0.0, 2.0 * base[-1] + 1.0)
        ge2, ss2 = sensitivities(spec, pt, 1, grid=doubled)
        assert abs(ge1 - ge2) < 1e-6
        assert abs(ss1 - ss2) < 1e-6

    def test_self_standardized_affine_invariant(self):
        spec, beta = model_one(n=30)
        pt = eval_point(spec, 0.5, beta)
        _, ss1 = sensitivities(spec, pt, 2)
        c = 5.0
        X2 = spec.X.copy()
        X2[:, 1] *= c
        spec2 = ModelSpec(X=X2, y=spec.y, family=Poisson())
        pt2 = eval_point(spec2, 0.5, np.array([beta[0], beta[1] / c]))
        _, ss2 = sensitivities(spec2, pt2, 2)
        assert abs(ss1 - ss2) < 1e-8 * (1.0 + ss1)


class TestExport:
    def test_empty_alpha_list(self):
        spec, beta = model_one(n=10)
        assert influence_grid_export(spec, [], [1]) == []

    def test_figure_layout_rows(self):
        spec, beta = model_one()
        fits = [eval_point(spec, a, beta) for a in (0.0, 0.1, 0.25, 0.5, 1.0)]
        rows = influence_grid_export(spec, fits, [1, 20], grid=np.arange(0.0, 11.0))
        # alphas x directions x grid x coefficients
        assert len(rows) == 5 * 2 * 11 * 2
        assert rows[0][:2] == (0.0, 1)

    def test_round_trip_bit_exact(self, tmp_path):
        spec, beta = model_one(n=12)
        fits = [eval_point(spec, 0.5, beta)]
        rows = influence_grid_export(spec, fits, [3], grid=np.arange(0.0, 20.0))
        path = tmp_path / "influence.csv"
        write_influence_csv(rows, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "alpha,i0,t,coef,if_value"
        for row, line in zip(rows, lines[1:]):
            cells = line.split(",")
            assert float(cells[0]) == row[0]
            assert int(cells[1]) == row[1]
            assert float(cells[2]) == row[2]
            assert cells[3] == row[3]
            assert float(cells[4]) == row[4]
