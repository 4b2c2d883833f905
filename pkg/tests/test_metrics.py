"""Tests for the measure distances: OT oracles, variation estimators, damped metrics."""

import io
import itertools

import numpy as np
import pytest

from mvstable.errors import (
    CapacityError,
    DomainError,
    GridAlignmentError,
    ParameterError,
)
from mvstable.grids import TimeGrid
from mvstable.measures import BinningSpec, EmpiricalMeasure, MeasureFlow
from mvstable.metrics import (
    MetricParams,
    damped_sup_distance,
    stratified_subsample,
    total_variation,
    wasserstein,
    weighted_variation,
)

from conftest import random_measure


def brute_force_uniform_ot(g, h, kappa):
    """Exhaustive permutation search; exact for uniform equal-count supports."""
    n = g.n_atoms
    cost = np.linalg.norm(g.atoms[:, None, :] - h.atoms[None, :, :], axis=2) ** kappa
    best = min(
        cost[range(n), perm].sum() / n for perm in itertools.permutations(range(n))
    )
    return best ** (1.0 / kappa) if kappa > 1 else best


def holder_envelope(rng, kappa, d, n_anchors=4):
    """Random f with Hoelder-kappa seminorm <= 1: f(x) = min_i (v_i + |x - p_i|^kappa)."""
    anchors = rng.normal(scale=2.0, size=(n_anchors, d))
    offsets = rng.normal(scale=1.0, size=n_anchors)

    def f(x):
        dists = np.linalg.norm(x[:, None, :] - anchors[None, :, :], axis=2) ** kappa
        return (offsets[None, :] + dists).min(axis=1)

    return f


class TestWassersteinExamples:
    def test_two_diracs_kappa1(self):
        g, h = EmpiricalMeasure.dirac(0.0), EmpiricalMeasure.dirac(1.0)
        assert wasserstein(g, h, 1.0) == pytest.approx(1.0, abs=1e-12)

    def test_two_diracs_concave_no_outer_power(self):
        g, h = EmpiricalMeasure.dirac(0.0), EmpiricalMeasure.dirac(2.0)
        assert wasserstein(g, h, 0.5) == pytest.approx(np.sqrt(2.0), rel=1e-12)

    def test_five_atoms_d2_vs_brute_force(self, rng):
        for _ in range(8):
            g = EmpiricalMeasure.from_samples(rng.normal(size=(5, 2)))
            h = EmpiricalMeasure.from_samples(rng.normal(size=(5, 2)))
            ours = wasserstein(g, h, 1.5)
            oracle = brute_force_uniform_ot(g, h, 1.5)
            assert abs(ours - oracle) < 1e-8

    def test_monotone_vs_lp_routes(self, rng):
        # two independent exact routes must agree for convex 1-d costs
        from mvstable.metrics import _lp_cost, _monotone_cost_1d

        for _ in range(6):
            g = random_measure(rng, n=7)
            h = random_measure(rng, n=5)
            for kappa in (1.0, 1.3, 2.0):
                assert _monotone_cost_1d(g, h, kappa) == pytest.approx(
                    _lp_cost(g, h, kappa), abs=1e-9
                )

    def test_capacity_error(self, rng):
        g = EmpiricalMeasure.from_samples(rng.normal(size=(40, 1)))
        h = EmpiricalMeasure.from_samples(rng.normal(size=(40, 1)))
        with pytest.raises(CapacityError, match="subsample"):
            wasserstein(g, h, 1.0, atom_cap=64)


class TestMetricAxioms:
    def test_symmetry_exact(self, rng):
        for kappa in (0.5, 1.0, 1.7):
            g, h = random_measure(rng, 6), random_measure(rng, 6)
            assert wasserstein(g, h, kappa) == wasserstein(h, g, kappa)

    def test_identity(self, rng):
        g = random_measure(rng, 6)
        assert wasserstein(g, g, 1.3) == 0.0
        h = EmpiricalMeasure(g.atoms, g.weights.copy())
        assert wasserstein(g, h, 0.7) == 0.0

    def test_positivity_on_distinct(self, rng):
        g, h = random_measure(rng, 5), random_measure(rng, 5)
        assert wasserstein(g, h, 1.0) > 0

    def test_triangle_inequality(self, rng):
        for kappa in (0.6, 1.0, 1.5):
            for _ in range(5):
                a, b, c = (random_measure(rng, 5) for _ in range(3))
                dab = wasserstein(a, b, kappa)
                dbc = wasserstein(b, c, kappa)
                dac = wasserstein(a, c, kappa)
                assert dac <= dab + dbc + 1e-8


class TestDualAndDominance:
    def test_holder_dual_inequality(self, rng):
        # adjoint formula: |g(f) - h(f)| <= W_kappa for [f]_kappa <= 1, kappa <= 1
        for kappa in (0.5, 0.8, 1.0):
            for _ in range(20):
                d = int(rng.integers(1, 3))
                g, h = random_measure(rng, 6, d=d), random_measure(rng, 6, d=d)
                w = wasserstein(g, h, kappa)
                f = holder_envelope(rng, kappa, d)
                assert abs(g.integrate(f) - h.integrate(f)) <= w + 1e-8

    def test_wasserstein_below_weighted_variation_shared_atoms(self, rng):
        for _ in range(10):
            atoms = rng.normal(size=(8, 1))
            w1, w2 = rng.random(8), rng.random(8)
            g = EmpiricalMeasure(atoms, w1 / w1.sum())
            h = EmpiricalMeasure(atoms, w2 / w2.sum())
            assert wasserstein(g, h, 1.0) <= weighted_variation(g, h, 1.0, None) + 1e-12

    def test_tv_below_weighted_variation(self, rng):
        atoms = rng.normal(size=(6, 1))
        w1, w2 = rng.random(6), rng.random(6)
        g = EmpiricalMeasure(atoms, w1 / w1.sum())
        h = EmpiricalMeasure(atoms, w2 / w2.sum())
        assert total_variation(g, h, None) <= weighted_variation(g, h, 1.4, None) + 1e-12


class TestVariationEstimators:
    def test_equal_measures_zero(self, rng):
        g = random_measure(rng, 6)
        bins = BinningSpec([-10.0], [10.0], 64)
        assert weighted_variation(g, g, 1.0, bins) == 0.0
        assert total_variation(g, g, bins) == 0.0

    def test_two_diracs_weighted(self):
        # mass at 0 and 1: sup attained by f = +-(1 + |x|): (1+0) + (1+1) = 3
        g, h = EmpiricalMeasure.dirac(0.0), EmpiricalMeasure.dirac(1.0)
        bins = BinningSpec([-0.25], [1.25], 3)  # bins separate 0 and 1
        assert weighted_variation(g, h, 1.0, bins) == pytest.approx(3.0, abs=0.26)
        # on the shared-atom union representation the value is exact
        atoms = np.array([[0.0], [1.0]])
        ge = EmpiricalMeasure(atoms, np.array([1.0, 0.0]))
        he = EmpiricalMeasure(atoms, np.array([0.0, 1.0]))
        assert weighted_variation(ge, he, 1.0, None) == pytest.approx(3.0, abs=1e-12)

    def test_disjoint_supports_tv_two(self):
        g = EmpiricalMeasure.from_samples(np.array([-2.0, -1.5]))
        h = EmpiricalMeasure.from_samples(np.array([1.5, 2.0]))
        bins = BinningSpec([-3.0], [3.0], 12)
        assert total_variation(g, h, bins) == pytest.approx(2.0, abs=1e-12)

    def test_refinement_consistency(self, rng):
        # needs enough samples per fine bin for the estimator to have settled
        x = rng.normal(loc=0.0, scale=1.0, size=300_000)
        y = rng.normal(loc=0.4, scale=1.2, size=300_000)
        g, h = EmpiricalMeasure.from_samples(x), EmpiricalMeasure.from_samples(y)
        lo, hi = [min(x.min(), y.min()) - 0.1], [max(x.max(), y.max()) + 0.1]
        coarse = weighted_variation(g, h, 1.0, BinningSpec(lo, hi, 64))
        fine = weighted_variation(g, h, 1.0, BinningSpec(lo, hi, 640))
        assert abs(coarse - fine) / fine < 0.05

    def test_atom_outside_box_reported(self):
        g = EmpiricalMeasure.from_samples(np.array([0.0, 5.0]))
        h = EmpiricalMeasure.from_samples(np.array([0.2, 0.4]))
        with pytest.raises(DomainError, match="5.0"):
            weighted_variation(g, h, 1.0, BinningSpec([-1.0], [1.0], 8))

    def test_permutation_invariance(self, rng):
        atoms = rng.normal(size=(9, 1))
        w = rng.random(9)
        w /= w.sum()
        perm = rng.permutation(9)
        g = EmpiricalMeasure(atoms, w)
        gp = EmpiricalMeasure(atoms[perm], w[perm])
        h = random_measure(rng, 7)
        bins = BinningSpec([-8.0], [8.0], 32)
        assert weighted_variation(g, h, 1.0, bins) == weighted_variation(gp, h, 1.0, bins)


class TestDampedSup:
    def _flows(self, rng, grid, shift=0.0):
        measures = tuple(
            random_measure(rng, 12).shifted(shift) for _ in range(grid.n_nodes)
        )
        return MeasureFlow(grid, measures)

    def test_equal_flows_zero(self, rng):
        grid = TimeGrid.uniform(1.0, 5)
        f = self._flows(rng, grid)
        params = MetricParams(k=1.2, eta=0.5, eta_support=None)
        assert damped_sup_distance(f, f, 7.0, "eta_plus_k", params) == 0.0

    def test_single_node_plain_sum(self, rng):
        grid = TimeGrid(np.array([0.0, 1.0]))
        g, h = random_measure(rng, 6), random_measure(rng, 6)
        f1 = MeasureFlow(grid, (g, g))
        f2 = MeasureFlow(grid, (h, h))
        params = MetricParams(k=1.2, eta=0.5, eta_support=None)
        val = damped_sup_distance(f1, f2, 0.0, "eta_plus_k", params)
        expected = wasserstein(g, h, 0.5) + wasserstein(g, h, 1.2)
        assert val == pytest.approx(expected, rel=1e-12)

    def test_monotone_in_delta(self, rng):
        grid = TimeGrid.uniform(1.0, 6)
        f1, f2 = self._flows(rng, grid), self._flows(rng, grid, shift=0.3)
        params = MetricParams(k=1.2, eta=0.5, eta_support=None, auto_bins=64)
        vals = [
            damped_sup_distance(f1, f2, d, "kvar_plus_k", params)
            for d in (0.0, 1.0, 2.0, 4.0, 8.0)
        ]
        assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))

    def test_grid_mismatch(self, rng):
        f1 = self._flows(rng, TimeGrid.uniform(1.0, 4))
        f2 = self._flows(rng, TimeGrid.uniform(1.0, 5))
        params = MetricParams(k=1.2, eta=0.5)
        with pytest.raises(GridAlignmentError):
            damped_sup_distance(f1, f2, 1.0, "eta_plus_k", params)

    def test_skip_bound_matches_full_scan(self, rng):
        # the bound-pruned maximum must equal the exhaustive one
        grid = TimeGrid.uniform(1.0, 8)
        f1, f2 = self._flows(rng, grid), self._flows(rng, grid, shift=0.2)
        params = MetricParams(k=1.2, eta=0.5, eta_support=None, auto_bins=64)
        from mvstable.metrics import _node_distance

        for delta in (0.0, 3.0, 11.0):
            brute = max(
                np.exp(-delta * grid.nodes[i])
                * _node_distance(f1.at(i), f2.at(i), "eta_plus_k", params)
                for i in range(grid.n_nodes)
            )
            val = damped_sup_distance(f1, f2, delta, "eta_plus_k", params)
            assert val == pytest.approx(brute, rel=1e-12)


class TestMomentsAndSubsample:
    def test_dirac_moments(self):
        assert EmpiricalMeasure.dirac(0.0).moment(1.7) == 0.0
        assert EmpiricalMeasure.dirac(-2.0).moment(3.0) == pytest.approx(8.0)

    def test_two_atom_moment(self):
        g = EmpiricalMeasure.from_samples(np.array([-1.0, 1.0]))
        assert g.moment(2.0) == pytest.approx(1.0)

    def test_subsample_deterministic_and_sane(self, rng):
        g = EmpiricalMeasure.from_samples(rng.normal(size=(5000, 1)))
        s1 = stratified_subsample(g, 128, seed=5)
        s2 = stratified_subsample(g, 128, seed=5)
        assert np.array_equal(s1.atoms, s2.atoms)
        assert s1.n_atoms == 128
        # quantile sketch stays W1-close to the original
        assert wasserstein(s1, stratified_subsample(g, 256, 5), 1.0, 8192) < 0.05

    def test_csv_roundtrip(self, rng):
        g = random_measure(rng, 7, d=2)
        buf = io.StringIO()
        g.to_csv(buf)
        buf.seek(0)
        back = EmpiricalMeasure.from_csv(buf)
        assert np.allclose(back.atoms, g.atoms)
        assert np.allclose(back.weights, g.weights)
