"""Acceptance suite: one test per acceptance criterion, at the stated
tolerances and scales.  Each test prints a `[acceptance] name: PASS` line
(visible with `pytest -s tests/test_acceptance.py`).

The criteria are statistical at fixed significance; the master seeds below
make every run deterministic.
"""

import itertools
import time

import numpy as np
import pytest

from mvstable.coefficients import make_benchmark_coefficients, make_zero_drift_identity
from mvstable.counterexample import calibrate, tail_ratio, verify_two_solutions
from mvstable.grids import TimeGrid
from mvstable.kernels import duhamel_residual, gradient_scaling_check, tanh_prime
from mvstable.measures import EmpiricalMeasure, MeasureFlow
from mvstable.metrics import damped_sup_distance, wasserstein
from mvstable.solver import (
    SolverConfig,
    contraction_estimate,
    moment_bound_report,
    solve,
)
from mvstable.stable_paths import (
    StableParams,
    empirical_charfn,
    empirical_laplace,
    exact_charfn,
    exact_laplace,
    sample_one_sided_stable,
    sample_stable_marginal,
    subordinator_negative_moment,
)
from mvstable.rng import stream

pytestmark = pytest.mark.acceptance

N_TRANSFORM = 10**6
ALPHAS = (1.2, 1.5, 1.8)
ARGS = (0.5, 1.0, 2.0)
TIMES = (0.5, 1.0)


def report(name: str, passed: bool, detail: str) -> None:
    print(f"[acceptance] {name}: {'PASS' if passed else 'FAIL'} ({detail})")
    assert passed, f"{name}: {detail}"


class TestTransforms:
    def test_laplace_transform(self):
        worst = 0.0
        for i, (alpha, r, t) in enumerate(itertools.product(ALPHAS, ARGS, TIMES)):
            s = t ** (2.0 / alpha) * sample_one_sided_stable(
                alpha / 2.0, N_TRANSFORM, stream(40_000, i)
            )
            emp, se = empirical_laplace(s, r)
            dev = abs(emp - exact_laplace(alpha, r, t)) / se
            worst = max(worst, dev)
        report("laplace-transform", worst < 3.0, f"max |dev| = {worst:.2f} se over 18 cells")

    def test_characteristic_function(self):
        worst = 0.0
        for i, (alpha, xi, t) in enumerate(itertools.product(ALPHAS, ARGS, TIMES)):
            z = sample_stable_marginal(
                StableParams(alpha, 1), t, N_TRANSFORM, stream(11_000, i)
            )
            emp, se = empirical_charfn(z, xi)
            dev = abs(emp - exact_charfn(alpha, xi, t)) / se
            worst = max(worst, dev)
        report("characteristic-function", worst < 3.0, f"max |dev| = {worst:.2f} se")

    def test_negative_moment_identity(self):
        alpha = 1.5
        s1 = sample_one_sided_stable(alpha / 2.0, N_TRANSFORM, stream(12_000, 0))
        worst = 0.0
        for eps in (0.0, 0.5, 1.0):
            mc = float(np.mean(s1 ** ((-1.0 + eps) / 2.0)))
            closed = subordinator_negative_moment(alpha, eps, 1.0)
            worst = max(worst, abs(mc - closed) / closed)
        report(
            "negative-moment-identity", worst < 0.02,
            f"max relative deviation = {worst:.4f} (< 2%)",
        )


class TestCounterexample:
    def test_two_solutions_and_tail_ratio(self):
        alpha = 1.5
        params = calibrate(alpha, 10**6, stream(13_000, 0))
        rep = verify_two_solutions(
            params, 10**6, np.linspace(0.1, 1.0, 10), stream(13_000, 1), scales=(1.0, 2.0)
        )
        worst = max(abs(r["residual"]) / r["stderr"] for r in rep["rows"])
        est = tail_ratio(alpha, 50.0, 10**7, stream(13_000, 2))
        tail_dev = abs(est.ratio - est.limit) / est.stderr
        ok = worst < 3.0 and tail_dev < 3.0
        report(
            "counterexample",
            ok,
            f"M={params.M}, max sigma residual = {worst:.2f} se over 10 t-points x "
            f"c in (1,2); tail ratio dev = {tail_dev:.2f} se of {est.limit:.4f}",
        )


class TestAppendixLimits:
    def _check(self, res, budget, elapsed, name):
        rows = res["rows"]
        est = [r["estimate"] for r in rows]
        se = [r["stderr"] for r in rows]
        noninc = all(
            est[i + 1] <= est[i] + 2.0 * np.hypot(se[i], se[i + 1])
            for i in range(len(est) - 1)
        )
        halved = est[-1] < 0.5 * est[0]
        enveloped = all(r["estimate"] <= r["envelope"] + 3.0 * r["stderr"] for r in rows)
        report(
            name,
            noninc and halved and enveloped and elapsed < budget,
            f"decay {est[0]:.4f} -> {est[-1]:.4f}, envelope ok, {elapsed:.0f}s",
        )

    def test_limit_part_i(self):
        from mvstable.limits import LimitExperiment, limit_i

        t0 = time.time()
        res = limit_i(
            LimitExperiment(alpha=1.5, kappa=0.3, n_paths=10**5, n_steps=200,
                            master_seed=14_000)
        )
        self._check(res, 600.0, time.time() - t0, "appendix-limit-i")

    def test_limit_part_ii(self):
        from mvstable.limits import LimitExperiment, limit_ii

        t0 = time.time()
        res = limit_ii(
            LimitExperiment(alpha=1.5, kappa=0.9, n_paths=10**5, n_steps=200,
                            master_seed=14_001)
        )
        self._check(res, 600.0, time.time() - t0, "appendix-limit-ii")


class TestKernels:
    def test_gradient_scaling_slopes(self):
        grid = TimeGrid.uniform(1.0, 200)
        nu = MeasureFlow.constant(grid, EmpiricalMeasure.dirac(0.0))
        coeffs = make_zero_drift_identity(dim=1, alpha=1.5)
        devs = {}
        for eps in (0.0, 1.0):
            rep = gradient_scaling_check(coeffs, nu, eps, 10**5, 15_000)
            devs[eps] = abs(rep["slope"] - rep["theoretical_slope"])
        report(
            "kernel-gradient-scaling",
            all(v <= 0.1 for v in devs.values()),
            f"slope deviations: eps=0 -> {devs[0.0]:.4f}, eps=1 -> {devs[1.0]:.4f} (<= 0.1)",
        )

    def test_duhamel_identity(self):
        grid = TimeGrid.uniform(1.0, 200)
        gamma = EmpiricalMeasure.from_samples(np.linspace(-0.5, 0.5, 9))
        nu = MeasureFlow.constant(grid, gamma)
        rep = duhamel_residual(
            np.tanh, tanh_prime, make_benchmark_coefficients(dim=1), nu, nu,
            0.5, 10**5, 16_000,
        )
        floor = max(3.0 * rep["stderr"], 5e-3)
        rep0 = duhamel_residual(
            np.tanh, tanh_prime, make_zero_drift_identity(dim=1, alpha=1.5), nu, nu,
            0.5, 10**5, 16_001,
        )
        ok = rep["abs_residual"] < floor and rep0["abs_residual"] < 3.0 * rep0["stderr"]
        report(
            "duhamel-identity",
            ok,
            f"benchmark residual {rep['abs_residual']:.2e} < {floor:.2e}; "
            f"b=0 residual {rep0['abs_residual']:.2e} < 3se = {3 * rep0['stderr']:.2e}",
        )


class TestFixedPoint:
    def test_uniqueness_surrogate(self):
        coeffs = make_benchmark_coefficients(dim=1)
        config = SolverConfig(
            n_particles=10**4,
            grid=TimeGrid.uniform(1.0, 200),
            master_seed=17_000,
            tol_outer=1e-2,
            tol_inner=5e-3,
        )
        gamma = EmpiricalMeasure.from_samples(np.linspace(-0.5, 0.5, 9))
        t0 = time.time()
        r1 = solve(gamma, coeffs, config)
        mu0 = MeasureFlow.constant(
            config.grid, EmpiricalMeasure.from_samples(np.linspace(1.0, 2.0, 7))
        )
        r2 = solve(gamma, coeffs, config, mu0=mu0)
        elapsed = time.time() - t0
        gap = damped_sup_distance(
            r1.flow, r2.flow, config.delta, "kvar_plus_k", config.metric_params(coeffs)
        )
        report(
            "fixed-point-uniqueness",
            gap <= 2 * config.tol_outer and elapsed < 900.0,
            f"flow gap {gap:.2e} <= 2e-2, runtime {elapsed:.0f}s",
        )

    def test_contraction_rate(self):
        coeffs = make_benchmark_coefficients(dim=1)
        config = SolverConfig(
            n_particles=8000, grid=TimeGrid.uniform(1.0, 200), master_seed=17_500
        )
        gamma = EmpiricalMeasure.from_samples(np.linspace(-0.5, 0.5, 9))
        table = contraction_estimate(gamma, coeffs, config, (5.0, 20.0, 80.0), shift=0.25)
        ratios = [r["ratio"] for r in table["rows"]]
        noninc = all(a >= b for a, b in zip(ratios, ratios[1:]))
        bound = table["theoretical_slope"] + 0.15
        report(
            "contraction-rate",
            noninc and table["slope"] <= bound,
            f"ratios {['%.4f' % r for r in ratios]}, slope {table['slope']:.3f} <= {bound:.3f}",
        )

    def test_moment_bound_regression(self):
        coeffs = make_benchmark_coefficients(dim=1)
        k = coeffs.k
        xs, ys = [], []
        for i, x in enumerate((1.0, 10.0, 100.0)):
            config = SolverConfig(
                n_particles=4000, grid=TimeGrid.uniform(1.0, 200),
                master_seed=18_000 + i,
            )
            result = solve(EmpiricalMeasure.dirac(x), coeffs, config)
            rep = moment_bound_report(result.ensemble, k)
            xs.append(rep["base"])
            ys.append(rep["sup_moment"])
        slope, intercept = np.polyfit(xs, ys, 1)
        fitted = np.polyval([slope, intercept], xs)
        ss_res = float(np.sum((np.array(ys) - fitted) ** 2))
        ss_tot = float(np.sum((np.array(ys) - np.mean(ys)) ** 2))
        r2 = 1.0 - ss_res / ss_tot
        report(
            "moment-bound-affine",
            r2 > 0.999,
            f"R^2 = {r2:.6f} across 1+E|X0|^k in {['%.1f' % v for v in xs]}",
        )


class TestMetricModule:
    def test_ot_brute_force_and_dual(self):
        rng = stream(19_000, 0)
        max_dev = 0.0
        for i in range(40):
            d = 1 + (i % 2)
            kappa = (0.5, 1.0, 1.5)[i % 3]
            g = EmpiricalMeasure.from_samples(rng.normal(size=(5, d)))
            h = EmpiricalMeasure.from_samples(rng.normal(size=(5, d)))
            ours = wasserstein(g, h, kappa)
            cost = (
                np.linalg.norm(g.atoms[:, None, :] - h.atoms[None, :, :], axis=2)
                ** kappa
            )
            best = min(
                cost[range(5), perm].sum() / 5
                for perm in itertools.permutations(range(5))
            )
            oracle = best ** (1 / kappa) if kappa > 1 else best
            max_dev = max(max_dev, abs(ours - oracle))
        violations = 0
        for i in range(1000):
            kappa = (0.5, 0.8, 1.0)[i % 3]
            g = EmpiricalMeasure.from_samples(rng.normal(size=(6, 1)))
            h = EmpiricalMeasure.from_samples(rng.normal(size=(6, 1)))
            w = wasserstein(g, h, kappa)
            anchors = rng.normal(scale=2.0, size=4)
            offsets = rng.normal(size=4)
            vals_g = (offsets[None, :] + np.abs(g.atoms - anchors[None, :]) ** kappa).min(axis=1)
            vals_h = (offsets[None, :] + np.abs(h.atoms - anchors[None, :]) ** kappa).min(axis=1)
            if abs(vals_g @ g.weights - vals_h @ h.weights) > w + 1e-8:
                violations += 1
        report(
            "metric-module",
            max_dev < 1e-8 and violations == 0,
            f"max OT deviation {max_dev:.2e} over 40 instances; "
            f"dual violations {violations}/1000",
        )
