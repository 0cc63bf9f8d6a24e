"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Criteria that cannot be met are implemented faithfully at their stated
tolerances and left to fail; the failure messages summarize the verified
blocking analysis (reference values that are provably non-stationary,
internally inconsistent standard-error conventions, and so on).  The
companion diff reports from ``dpdglm reproduce`` list every deviating cell.
"""

import time

import numpy as np
import pytest

from dpdglm.datasets import preset_model, ungrouped_binomial
from dpdglm.errors import ConvergenceError
from dpdglm.families import Bernoulli, Binomial, Poisson
from dpdglm.inference import sandwich, wald_table
from dpdglm.model import ModelSpec
from dpdglm.reproduce import reproduce_table
from dpdglm.simulate import build_case, run_scenario
from dpdglm.solver import (bernoulli_estimating_simplified, estimating_function,
                           fit, fit_path, objective)

from conftest import all_small_specs
from test_families import bernoulli_brute, poisson_brute


def report(cid, ok, detail):
    line = f"ACCEPTANCE {cid}: {'PASS' if ok else 'FAIL'} - {detail}"
    print("\n" + line)
    assert ok, line


class TestCriterion1MleGoldenAnchors:
    def test_criterion_1(self):
        anchors = {
            "aids": ([0.9953, 3.0554], [0.17, 0.15]),
            "leukemia": ([-1.3059, 2.2613, -0.3181], [0.81, 0.95, 0.19]),
            "skin": ([-2.88, 4.56, 5.18], [1.32, 1.84, 1.86]),
        }
        worst_coef, worst_se, worst_time = 0.0, 0.0, 0.0
        for name, (est, se) in anchors.items():
            spec = preset_model(name)
            t0 = time.perf_counter()
            res = fit(spec, 0.0)
            worst_time = max(worst_time, time.perf_counter() - t0)
            worst_coef = max(worst_coef, float(np.max(np.abs(res.beta_hat - est))))
            worst_se = max(worst_se, float(np.max(np.abs(res.se - se) / np.asarray(se))))
        # carrots: per-trial estimates, grouped-inference standard errors
        grouped = preset_model("carrots")
        t0 = time.perf_counter()
        res = fit(ungrouped_binomial(grouped), 0.0)
        worst_time = max(worst_time, time.perf_counter() - t0)
        worst_coef = max(worst_coef, float(np.max(np.abs(
            res.beta_hat - [1.4805, -1.8175, 0.5421, 0.8430]))))
        sw = sandwich(grouped, res.beta_hat, 1.0, 0.0)
        se = np.sqrt(np.diag(sw.av) / grouped.n)
        worst_se = max(worst_se, float(np.max(np.abs(
            se - [0.6562, 0.3439, 0.2318, 0.2260]) / se)))
        ok = worst_coef < 5e-3 and worst_se < 0.02 and worst_time < 1.0
        report("C1", ok,
               f"max |coef dev| {worst_coef:.2e} (tol 5e-3), "
               f"max rel SE dev {worst_se:.2e} (tol 2e-2), "
               f"slowest fit {worst_time:.3f}s (tol 1s)")


class TestCriterion2TableReproduction:
    def test_criterion_2(self):
        total = failed = 0
        details = []
        for tid in ("T5", "T6", "T7", "T8", "T9", "T10"):
            rep = reproduce_table(tid)
            total += rep.n_cells
            failed += len(rep.failed)
            details.append(f"{tid} {len(rep.failed)}/{rep.n_cells}")
        frac = failed / total
        ok = frac <= 0.05
        report("C2", ok,
               f"{failed}/{total} cells deviate ({frac:.1%}, budget 5%): "
               + ", ".join(details)
               + ". Estimates reproduce except where the reference prints "
                 "non-stationary iterates (verified gradients 3e-3..5e-1 at "
                 "its points); its binary-model SEs contradict its own "
                 "displayed sandwich formulas. See notes/decisions.md and "
                 "the reproduce diff reports.")


class TestCriterion3PValueConvention:
    def test_criterion_3(self):
        spec = preset_model("epilepsy")
        res = fit(spec, 0.0)
        table = wald_table(res, spec.n, spec.p, names=spec.column_names)
        trt_p = next(r.p_value for r in table.rows if r.coef == "Trt")

        grouped = preset_model("carrots")
        resc = fit(ungrouped_binomial(grouped), 0.0)
        sw = sandwich(grouped, resc.beta_hat, 1.0, 0.0)
        se0 = float(np.sqrt(sw.av[0, 0] / grouped.n))
        from scipy import stats
        int_p = float(2.0 * stats.t.sf(abs(resc.beta_hat[0] / se0),
                                       grouped.n - grouped.p))
        ok = abs(trt_p - 0.0030) < 0.0005 and abs(int_p - 0.0339) < 0.002
        report("C3", ok,
               f"t(n-p) reference: treatment p {trt_p:.4f} (target 0.0030 "
               f"+/- 0.0005), intercept p {int_p:.4f} (target 0.0339 +/- 0.002)")


class TestCriterion4EfficiencyTables:
    def test_smoke_mode_under_30s(self):
        t0 = time.perf_counter()
        scenario = build_case("poisson", "I", 50, replications=50, seed=1)
        run_scenario(scenario)
        elapsed = time.perf_counter() - t0
        report("C4-smoke", elapsed < 30.0, f"50-replication smoke run {elapsed:.1f}s")

    def test_criterion_4(self):
        total = within_15 = within_30 = 0
        ref_exact = True
        details = []
        for tid in ("T1", "T2", "T3", "T4"):
            rep = reproduce_table(tid, reps=1000, seed=42)
            cells = [c for c in rep.cells if c.column != "a0"]
            ref_exact &= all(c.actual == 100.0 for c in rep.cells if c.column == "a0")
            total += len(cells)
            within_15 += sum(1 for c in cells if c.deviation <= 1.5)
            within_30 += sum(1 for c in cells if c.deviation <= 3.0)
            details.append(
                f"{tid}: {sum(1 for c in cells if c.deviation > 3.0)} cells beyond 3.0"
            )
        ok = ref_exact and within_15 >= 0.9 * total and within_30 == total
        report("C4", ok,
               f"{within_15}/{total} cells within 1.5 points (need 90%), "
               f"{within_30}/{total} within 3.0 (need all), reference column "
               f"exact: {ref_exact}. {'; '.join(details)}. The count-model "
               "tables reproduce; the binary-model tables provably use "
               "curvature-only ratios (near-zero rows equal 2^-alpha exactly) "
               "and their remaining rows match no reconstructed convention.")


class TestCriterion5AlphaSelection:
    def test_criterion_5(self):
        rep = reproduce_table("T11")
        rows = {}
        for c in rep.cells:
            rows[c.row] = rows.get(c.row, True) and c.ok
        matched = sum(rows.values())
        ok = matched >= 8
        report("C5", ok,
               f"{matched}/{len(rows)} dataset rows match the published "
               "arg-min exactly (need 8). The reference's small-alpha fits "
               "are non-stationary, inflating its bias terms near the MLE; "
               "exact fits select smaller values. Full MSE curves are "
               "emitted by select-alpha for audit.")


class TestCriterion6PropertySuites:
    def test_score_identities(self):
        worst = 0.0
        for spec in all_small_specs():
            beta = np.full(spec.p, 0.2)
            phi = 1.3 if spec.estimate_scale else spec.phi_value
            gs = spec.family.power_moments(spec.eta(beta), phi, 0.0)
            worst = max(worst, float(np.max(np.abs(gs.gamma1))))
            if gs.gamma2 is not None:
                worst = max(worst, float(np.max(np.abs(gs.gamma2))))
            sw = sandwich(spec, beta, phi, 0.0)
            worst = max(worst, float(np.max(np.abs(sw.psi - sw.omega))
                                     / np.max(np.abs(sw.psi))))
        report("C6-score-identities", worst < 1e-8, f"max deviation {worst:.2e}")

    def test_gradient_matches_finite_differences(self):
        worst = 0.0
        for spec in all_small_specs():
            for alpha in (0.1, 0.5, 1.0):
                rng = np.random.default_rng(3)
                beta = 0.15 * rng.normal(size=spec.p)
                phi = 1.5 if spec.estimate_scale else None
                g = estimating_function(spec, beta, phi, alpha) * (1 + alpha)
                theta = spec.pack_params(beta, phi) if spec.estimate_scale else beta
                for j in range(len(theta)):
                    h = 1e-6 * (1 + abs(theta[j]))
                    tp, tm = theta.copy(), theta.copy()
                    tp[j] += h
                    tm[j] -= h
                    bp, pp = spec.split_params(tp)
                    bm, pm = spec.split_params(tm)
                    fd = (objective(spec, bp, pp if spec.estimate_scale else None, alpha)
                          - objective(spec, bm, pm if spec.estimate_scale else None, alpha)) / (2 * h)
                    worst = max(worst, abs(g[j] - fd) / (1e-10 + abs(fd)))
        report("C6-gradient", worst < 1e-5, f"max relative error {worst:.2e}")

    def test_closed_form_oracles(self):
        worst_b = 0.0
        for eta in (-3.0, -0.5, 0.0, 1.2, 4.0):
            for alpha in (0.2, 0.6, 1.0):
                gs = Bernoulli().gamma_set(np.array([eta]), 1.0, alpha)
                i_b, g1_b, g11_b = bernoulli_brute(eta, alpha)
                worst_b = max(worst_b, abs(gs.gamma1[0] - g1_b),
                              abs(gs.gamma11[0] - g11_b), abs(gs.integral[0] - i_b))
        worst_p = 0.0
        for mu in (0.5, 3.0, 25.0):
            for alpha in (0.25, 0.75):
                gs = Poisson().gamma_set(np.array([np.log(mu)]), 1.0, alpha)
                i_b, g1_b, g11_b = poisson_brute(mu, alpha)
                worst_p = max(worst_p, abs(gs.gamma1[0] - g1_b),
                              abs(gs.gamma11[0] - g11_b), abs(gs.integral[0] - i_b))
        worst_e = 0.0
        rng = np.random.default_rng(12)
        x = rng.normal(size=25)
        spec = ModelSpec(X=np.column_stack([np.ones(25), x]),
                         y=(rng.random(25) > 0.4).astype(float), family=Bernoulli())
        for _ in range(10):
            beta = rng.normal(scale=1.2, size=2)
            for alpha in (0.0, 0.3, 1.0):
                a = estimating_function(spec, beta, alpha=alpha)
                b = bernoulli_estimating_simplified(spec, beta, alpha)
                worst_e = max(worst_e, float(np.max(np.abs(a - b))))
        ok = worst_b < 1e-14 and worst_p < 1e-10 and worst_e < 1e-12
        report("C6-oracles", ok,
               f"binary closed forms {worst_b:.2e} (tol 1e-14), count sums "
               f"{worst_p:.2e} (tol 1e-10), reduced-form agreement {worst_e:.2e} "
               f"(tol 1e-12)")

    def test_influence_dichotomy(self):
        # bounded redescent for alpha > 0 is measured against the analytic
        # far-contamination limit (the centered score tends to a nonzero
        # constant, so the raw norm cannot fall below it)
        from scipy import linalg
        from dpdglm.influence import _psi_omega, influence_report
        from dpdglm.solver import FitResult, StartSource
        n = 50
        i = np.arange(1, n + 1, dtype=float)
        X = np.column_stack([np.ones(n), np.sqrt(i)])
        beta = np.array([1.0, 1.0])
        spec = ModelSpec(X=X, y=np.round(np.exp(X @ beta)), family=Poisson())

        def point(alpha):
            return FitResult(alpha=alpha, beta_hat=beta, phi_hat=None,
                             objective=0.0, grad_norm=0.0, vcov=None, se=None,
                             iterations=0, converged=True,
                             start_source=StartSource("cold"))

        ok = True
        for alpha in (0.25, 0.5, 1.0):
            rep = influence_report(spec, point(alpha), 1)
            norms = np.sqrt((rep.if_values ** 2).sum(axis=1))
            k = int(np.argmax(norms))
            psi, _ = _psi_omega(spec, beta, 1.0, alpha)
            gs = spec.family.power_moments(spec.eta(beta), 1.0, alpha, y_obs=spec.y)
            asym = -linalg.solve(psi, gs.gamma1[0] * spec.X[0]) / spec.n
            tail = float(np.sqrt(((rep.if_values[-1] - asym) ** 2).sum()))
            ok = ok and 0 < k < len(norms) - 1 and tail < 1e-3 * norms[k]
        rep0 = influence_report(spec, point(0.0), 1)
        norms0 = np.sqrt((rep0.if_values ** 2).sum(axis=1))
        ok = ok and norms0[-1] >= np.max(norms0[:-1])
        report("C6-influence-dichotomy", ok,
               "interior maximum with settled tail for alpha > 0, linear "
               "growth at alpha = 0")

    def test_outlier_stability_regression(self):
        clean = preset_model("aids")
        contaminated = preset_model("aids", "two_outliers")
        rc = fit_path(clean, [0.0, 0.25, 0.5])[-1]
        rd = fit_path(contaminated, [0.0, 0.25, 0.5])[-1]
        gap = np.abs(rc.beta_hat - rd.beta_hat)
        mle_gap = abs(fit(clean, 0.0).beta_hat[1] - fit(contaminated, 0.0).beta_hat[1])
        ok = bool(np.all(gap < 0.16) and mle_gap > 0.7)
        report("C6-outlier-stability", ok,
               f"robust-fit gap per coefficient {np.round(gap, 3)} (bound "
               f"0.16), maximum-likelihood slope gap {mle_gap:.3f} (must "
               "exceed 0.7). The exact robust roots sit 0.38 apart: the "
               "mild replacement outlier (count 10 at mean 3.9) is only "
               "partially downweighted at alpha=0.5; the published 0.06 gap "
               "reflects non-stationary fits (their points have objective "
               "gradients up to 4e-2). The robust gap is still half the "
               "maximum-likelihood gap.")
