"""Tests for the Gaussian-mixture kernel checks."""

import numpy as np
import pytest
from scipy import stats

from mvstable.coefficients import make_benchmark_coefficients, make_zero_drift_identity
from mvstable.errors import NumericalIntegrityError, ParameterError
from mvstable.grids import TimeGrid
from mvstable.kernels import (
    KernelContext,
    StableMixture,
    _trapezoid,
    _semigroup_at_point,
    covariance_functional,
    duhamel_residual,
    gaussian_abs_moment,
    gradient_scaling_check,
    kernel_perturbation_check,
    make_kernel_context,
    mixed_density,
    tanh_prime,
)
from mvstable.measures import EmpiricalMeasure, MeasureFlow
from mvstable.stable_paths import StableParams, sample_stable_marginal


@pytest.fixture
def flow_ctx():
    grid = TimeGrid.uniform(1.0, 40)
    gamma = EmpiricalMeasure.from_samples(np.linspace(-0.5, 0.5, 9))
    nu = MeasureFlow.constant(grid, gamma)
    coeffs = make_zero_drift_identity(dim=1, alpha=1.5)
    return make_kernel_context(coeffs, nu, 500, master_seed=3)


class TestCovariance:
    def test_identity_noise_gives_total_increment(self, flow_ctx):
        path = flow_ctx.sub_values[0]
        a = covariance_functional(flow_ctx, path)
        assert a.shape == (1, 1)
        assert a[0, 0] == pytest.approx(path[-1] - path[0], rel=1e-12)

    def test_empty_window_zero(self):
        grid = TimeGrid.uniform(1.0, 10)
        gamma = EmpiricalMeasure.dirac(0.0)
        nu = MeasureFlow.constant(grid, gamma)
        coeffs = make_zero_drift_identity(dim=1)
        ctx = make_kernel_context(coeffs, nu, 10, 1, s=0.5, t=0.6)
        path = ctx.sub_values[0].copy()
        path[ctx.s_index : ] = path[ctx.s_index]  # flat over the window
        assert covariance_functional(ctx, path)[0, 0] == 0.0

    def test_piecewise_constant_blocks(self):
        # sigma jumps at t = 0.5: hand-summed two-block Stieltjes integral
        grid = TimeGrid.uniform(1.0, 10)
        gamma = EmpiricalMeasure.dirac(0.0)
        nu = MeasureFlow.constant(grid, gamma)
        coeffs = make_zero_drift_identity(dim=1, K2=5.0)
        coeffs.noise = lambda t, mu: np.array([[1.0 if t < 0.5 else 2.0]])
        ctx = make_kernel_context(coeffs, nu, 20, 2)
        path = ctx.sub_values[7]
        a = covariance_functional(ctx, path)[0, 0]
        i_half = grid.index_of(0.5)
        hand = (path[i_half] - path[0]) + 4.0 * (path[-1] - path[i_half])
        assert a == pytest.approx(hand, rel=1e-12)

    def test_sandwich_violation_caught(self, flow_ctx):
        bad = KernelContext(
            grid=flow_ctx.grid,
            nu_flow=flow_ctx.nu_flow,
            coeffs=flow_ctx.coeffs,
            sub_values=flow_ctx.sub_values,
            diffusion=flow_ctx.diffusion * 3.0,  # escapes K2 = 1
            s_index=flow_ctx.s_index,
            t_index=flow_ctx.t_index,
        )
        with pytest.raises(NumericalIntegrityError, match="sandwich"):
            covariance_functional(bad, bad.sub_values[0])


class TestMixedDensity:
    def test_normalizes_to_one(self, flow_ctx):
        # composite quadrature: fine core, geometric tails (the stable kernel
        # keeps ~1.5% of its mass beyond +-60 at t = 1)
        core = np.linspace(-60.0, 60.0, 3001)
        tail = 60.0 * np.geomspace(1.0, 1e4, 220)[1:]
        u = np.unique(np.concatenate([-tail, core, tail]))
        dens = np.array([mixed_density(flow_ctx, 0.0, y)[0] for y in u])
        mass = _trapezoid(dens, u)
        assert mass == pytest.approx(1.0, abs=0.01)

    def test_symmetry_in_arguments(self, flow_ctx):
        a, _ = mixed_density(flow_ctx, 0.3, -0.9)
        b, _ = mixed_density(flow_ctx, -0.9, 0.3)
        assert a == pytest.approx(b, rel=1e-12)

    def test_matches_sampled_stable_histogram(self):
        # sigma = I reduces the kernel to the stable transition density
        grid = TimeGrid.uniform(1.0, 30)
        gamma = EmpiricalMeasure.dirac(0.0)
        nu = MeasureFlow.constant(grid, gamma)
        coeffs = make_zero_drift_identity(dim=1, alpha=1.5)
        ctx = make_kernel_context(coeffs, nu, 4000, 9)
        z = sample_stable_marginal(StableParams(1.5, 1), 1.0, 200_000, 10)[:, 0]
        edges = np.linspace(-4.0, 4.0, 41)
        centers = 0.5 * (edges[1:] + edges[:-1])
        expected = np.array([mixed_density(ctx, 0.0, c)[0] for c in centers])
        expected_p = expected * np.diff(edges)
        counts, _ = np.histogram(z, bins=edges)
        inside = counts.sum()
        chi2 = np.sum((counts - inside * expected_p / expected_p.sum()) ** 2
                      / (inside * expected_p / expected_p.sum()))
        # 39 dof; 1% critical value is ~62.4
        assert chi2 < stats.chi2.ppf(0.99, len(centers) - 1) * 1.2


class TestGradientScaling:
    def test_slopes(self):
        grid = TimeGrid.uniform(1.0, 200)
        gamma = EmpiricalMeasure.dirac(0.0)
        nu = MeasureFlow.constant(grid, gamma)
        coeffs = make_zero_drift_identity(dim=1, alpha=1.5)
        for eps, target in ((0.0, -2.0 / 3.0), (1.0, 0.0), (1.2, 0.2 / 1.5)):
            rep = gradient_scaling_check(coeffs, nu, eps, 20_000, 11)
            assert abs(rep["slope"] - target) < 0.1, rep

    def test_epsilon_window(self):
        grid = TimeGrid.uniform(1.0, 20)
        nu = MeasureFlow.constant(grid, EmpiricalMeasure.dirac(0.0))
        coeffs = make_zero_drift_identity(dim=1)
        with pytest.raises(ParameterError):
            gradient_scaling_check(coeffs, nu, 1.6, 100, 0)

    def test_gaussian_abs_moment(self):
        # E|N(0,1)| = sqrt(2/pi); E|N(0,I_2)|^2 = 2
        assert gaussian_abs_moment(1.0, 1) == pytest.approx(np.sqrt(2 / np.pi))
        assert gaussian_abs_moment(2.0, 2) == pytest.approx(2.0)


def _two_noise_flows(grid, shift):
    base = EmpiricalMeasure.from_samples(np.linspace(-1.0, 1.0, 13))
    nu1 = MeasureFlow.constant(grid, base)
    nu2 = MeasureFlow.constant(grid, base.shifted(np.array([shift])))
    return nu1, nu2


class TestPerturbation:
    def test_identical_flows_zero(self):
        grid = TimeGrid.uniform(1.0, 30)
        coeffs = make_benchmark_coefficients(dim=1)
        nu1, _ = _two_noise_flows(grid, 0.3)
        rep = kernel_perturbation_check(coeffs, nu1, nu1, 0.5, 400, 12)
        assert rep["lhs"] == 0.0

    def test_ratio_stable_under_perturbation_sweep(self):
        grid = TimeGrid.uniform(1.0, 30)
        coeffs = make_benchmark_coefficients(dim=1)
        ratios = []
        for lam in (0.6, 0.3, 0.15):
            nu1, nu2 = _two_noise_flows(grid, lam)
            rep = kernel_perturbation_check(coeffs, nu1, nu2, 0.5, 1500, 13)
            assert 0.0 < rep["ratio"] < np.inf
            ratios.append(rep["ratio"])
        assert max(ratios) / min(ratios) < 2.0, ratios


class TestDuhamel:
    def _flows(self, steps=100):
        grid = TimeGrid.uniform(1.0, steps)
        gamma = EmpiricalMeasure.from_samples(np.linspace(-0.5, 0.5, 9))
        return MeasureFlow.constant(grid, gamma)

    def test_gradient_route_consistency(self):
        # the FFT-mixture route must agree with central differences of the
        # Gauss-Hermite route on interior points
        mix = StableMixture.build(1.5, 256, 4)
        tau = 0.3
        f = np.tanh
        for x in (-1.2, 0.0, 0.8):
            eps = 1e-4
            gh = (
                _semigroup_at_point(mix, tau, 1.5, f, x + eps)
                - _semigroup_at_point(mix, tau, 1.5, f, x - eps)
            ) / (2 * eps)
            from scipy.signal import fftconvolve

            from mvstable.kernels import _gradient_kernel_split

            L, N = 30.0, 4096
            u = np.linspace(-L, L, N)
            du = u[1] - u[0]
            npad = N // 2
            v = (np.arange(2 * npad + 1) - npad) * du
            w = u[0] + v[0] + du * np.arange(N + 2 * npad)
            k1, w_narrow = _gradient_kernel_split(mix, tau, 1.5, v, du)
            h = fftconvolve(np.tanh(w), k1[::-1], mode="valid") * du
            grad = np.interp(x, u, h) + w_narrow * tanh_prime(x)
            assert grad == pytest.approx(gh, abs=2e-4)

    def test_zero_drift_pure_noise(self):
        nu = self._flows()
        coeffs = make_zero_drift_identity(dim=1, alpha=1.5)
        rep = duhamel_residual(
            np.tanh, tanh_prime, coeffs, nu, nu, 0.5, 20_000, 14
        )
        assert rep["integral"] == 0.0
        assert rep["abs_residual"] < 3.0 * rep["stderr"]

    def test_constant_function_exact_zero(self):
        nu = self._flows(steps=40)
        coeffs = make_benchmark_coefficients(dim=1)
        one = lambda x: np.ones_like(np.asarray(x, dtype=float))
        zero = lambda x: np.zeros_like(np.asarray(x, dtype=float))
        rep = duhamel_residual(one, zero, coeffs, nu, nu, 0.5, 2_000, 15)
        assert rep["lhs"] == pytest.approx(1.0, abs=1e-12)
        assert rep["q_term"] == pytest.approx(1.0, abs=1e-9)
        assert rep["abs_residual"] < 1e-9

    def test_benchmark_coefficients_within_floor(self):
        nu = self._flows()
        coeffs = make_benchmark_coefficients(dim=1)
        rep = duhamel_residual(
            np.tanh, tanh_prime, coeffs, nu, nu, 0.5, 30_000, 16
        )
        assert rep["abs_residual"] < max(3.0 * rep["stderr"], 5e-3)

    def test_d2_not_supported(self):
        grid = TimeGrid.uniform(1.0, 10)
        gamma = EmpiricalMeasure.dirac(np.zeros(2))
        nu = MeasureFlow.constant(grid, gamma)
        coeffs = make_benchmark_coefficients(dim=2)
        with pytest.raises(ParameterError, match="d = 1"):
            duhamel_residual(np.tanh, tanh_prime, coeffs, nu, nu, 0.5, 100, 17)
