"""Tuning-parameter selection by estimated mean squared error."""

import numpy as np
import pytest

from dpdglm.datasets import preset_model
from dpdglm.errors import InputError, PartialCurveError
from dpdglm.solver import fit
from dpdglm.tuning import default_grid, estimated_mse, select_alpha

from conftest import small_poisson_spec


class TestEstimatedMse:
    def test_self_pilot_has_zero_bias(self):
        spec = small_poisson_spec()
        res = fit(spec, 0.3)
        entry = estimated_mse(spec, res, res)
        assert entry.bias_sq == 0.0
        assert entry.mse == entry.variance_trace
        assert np.isclose(entry.variance_trace, np.trace(res.vcov))

    def test_decomposition_exact(self):
        spec = small_poisson_spec()
        pilot = fit(spec, 0.5)
        cand = fit(spec, 0.2)
        entry = estimated_mse(spec, cand, pilot)
        assert entry.mse == entry.bias_sq + entry.variance_trace


class TestSelectAlpha:
    def test_singleton_grid(self):
        spec = small_poisson_spec()
        sel = select_alpha(spec, pilot_alpha=0.4, grid=[0.4])
        assert sel.optimal_alpha == 0.4
        assert len(sel.mse_curve) == 1

    def test_pilot_fixed_point_on_grid(self):
        spec = small_poisson_spec()
        sel = select_alpha(spec, pilot_alpha=0.5, grid=default_grid(0.1))
        pilot_entry = next(e for e in sel.mse_curve if e.alpha == 0.5)
        assert pilot_entry.bias_sq < 1e-12

    def test_curve_decomposition(self):
        spec = small_poisson_spec()
        sel = select_alpha(spec, pilot_alpha=0.2, grid=default_grid(0.25))
        for e in sel.mse_curve:
            assert e.mse == e.bias_sq + e.variance_trace

    def test_ties_break_toward_smaller(self):
        spec = small_poisson_spec()
        sel = select_alpha(spec, pilot_alpha=0.0, grid=[0.0, 0.5])
        curve = {e.alpha: e.mse for e in sel.mse_curve}
        if np.isclose(curve[0.0], curve[0.5]):
            assert sel.optimal_alpha == 0.0

    def test_mle_pilot_selects_mle_on_clean_data(self):
        spec = preset_model("aids")
        sel = select_alpha(spec, pilot_alpha=0.0, grid=default_grid(0.05))
        assert sel.optimal_alpha == 0.0

    def test_empty_grid_rejected(self):
        with pytest.raises(InputError):
            select_alpha(small_poisson_spec(), grid=[])

    def test_negative_values_rejected(self):
        with pytest.raises(InputError):
            select_alpha(small_poisson_spec(), pilot_alpha=-0.5)

    def test_partial_curve_error_lists_failures(self):
        # the quasi-separated binary data has no minimizer at large alpha
        spec = preset_model("skin")
        with pytest.raises(PartialCurveError) as err:
            select_alpha(spec, pilot_alpha=0.3, grid=default_grid(0.05))
        assert err.value.failed_alphas
        assert min(err.value.failed_alphas) > 0.5

    @pytest.mark.parametrize("name", ["aids", "leukemia", "carrots"])
    def test_grid_refinement_moves_at_most_one_coarse_step(self, name):
        spec = preset_model(name)
        coarse = select_alpha(spec, pilot_alpha=0.5, grid=default_grid(0.1))
        fine = select_alpha(spec, pilot_alpha=0.5, grid=default_grid(0.05))
        assert abs(coarse.optimal_alpha - fine.optimal_alpha) <= 0.1 + 1e-12
