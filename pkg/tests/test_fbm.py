"""Covariance structure, exact and Volterra samplers, type-H verification."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from fbmlab.fbm import (
    CovarianceModel,
    Hurst,
    TimeGrid,
    check_type_h,
    covariance,
    covariance_matrix,
    exact_fbm_model,
    increment_covariance,
    sample_cholesky,
    sample_volterra,
    volterra_kernel,
    _volterra_weights_cached,
)


class TestCovariance:
    def test_diagonal(self):
        assert covariance(0.75, 1.0, 1.0) == pytest.approx(1.0)
        assert covariance(0.6, 0.5, 0.5) == pytest.approx(0.5**1.2)

    def test_half_point(self):
        # s^{2H} and |t-s|^{2H} cancel when s = t - s
        assert covariance(0.75, 1.0, 0.5) == pytest.approx(0.5)

    def test_zero_time(self):
        assert covariance(0.8, 0.7, 0.0) == 0.0

    def test_symmetry(self):
        assert covariance(0.7, 0.3, 0.9) == pytest.approx(covariance(0.7, 0.9, 0.3))

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            covariance(0.7, -1.0, 0.5)

    def test_hurst_range_enforced(self):
        for bad in (0.5, 0.4, 1.0, 1.3):
            with pytest.raises(ValueError):
                Hurst(bad)


class TestVolterraKernel:
    def test_variance_identity(self):
        # oracle: Var B_1 = R(1,1) = 1
        val, err = quad(lambda s: volterra_kernel(0.7, 1.0, s) ** 2, 0.0, 1.0, limit=200)
        assert val == pytest.approx(1.0, abs=1e-7)

    def test_vanishes_at_upper_endpoint(self):
        # vanishing integration range: K(1, s) -> 0 continuously as s -> 1,
        # at the rate (t-s)^{H-1/2} set by the inner integrand
        gaps = np.array([1e-2, 1e-4, 1e-6])
        vals = np.array([volterra_kernel(0.7, 1.0, 1.0 - g) for g in gaps])
        assert vals[0] > vals[1] > vals[2] > 0
        slope = np.polyfit(np.log(gaps), np.log(vals), 1)[0]
        assert slope == pytest.approx(0.7 - 0.5, abs=0.02)

    def test_domain_errors(self):
        for t, s in ((1.0, 1.0), (0.5, 0.7), (1.0, 0.0), (1.0, -0.2)):
            with pytest.raises(ValueError):
                volterra_kernel(0.7, t, s)

    @pytest.mark.parametrize("t,s", [(1.0, 0.5), (0.8, 0.3), (0.6, 0.25), (1.0, 0.75)])
    def test_pairwise_reproduces_covariance(self, t, s):
        # oracle: the covariance op
        val, _ = quad(lambda u: volterra_kernel(0.7, t, u) * volterra_kernel(0.7, s, u),
                      0.0, s, limit=200)
        assert val == pytest.approx(covariance(0.7, t, s), abs=1e-5)


class TestCholeskySampler:
    def test_moments(self):
        grid = TimeGrid(64)
        paths = sample_cholesky(0.7, grid, dim=1, n_paths=10_000, seed=1)
        V = np.array([p.values[0] for p in paths])
        # centred process: mean within 4 standard errors at several nodes
        for k in (16, 32, 64):
            t = grid.nodes()[k]
            se = math.sqrt(t ** (2 * 0.7) / len(V))
            assert abs(V[:, k].mean()) <= 4 * se
        var = V[:, -1].var(ddof=1)
        se_var = math.sqrt(2.0 / len(V))  # relative SE of a Gaussian variance
        assert abs(var - 1.0) <= 4 * se_var

    def test_cross_covariance(self):
        grid = TimeGrid(64)
        paths = sample_cholesky(0.75, grid, dim=1, n_paths=10_000, seed=2)
        V = np.array([p.values[0] for p in paths])
        c = np.mean(V[:, -1] * V[:, 32])
        target = covariance(0.75, 1.0, 0.5)
        se = math.sqrt((covariance(0.75, 1, 1) * covariance(0.75, 0.5, 0.5) + target**2)
                       / len(V))
        assert abs(c - target) <= 4 * se

    def test_empirical_covariance_matrix(self):
        grid = TimeGrid(16)
        nodes = grid.nodes()[1:]
        R = covariance_matrix(0.75, nodes)
        paths = sample_cholesky(0.75, grid, dim=1, n_paths=10_000, seed=3)
        V = np.array([p.values[0][1:] for p in paths])
        emp = V.T @ V / len(V)
        se = np.sqrt((np.outer(np.diag(R), np.diag(R)) + R**2) / len(V))
        assert np.all(np.abs(emp - R) <= 5 * se)

    def test_increment_variance_random_pairs(self):
        grid = TimeGrid(128)
        paths = sample_cholesky(0.6, grid, dim=1, n_paths=10_000, seed=4)
        V = np.array([p.values[0] for p in paths])
        rng = np.random.default_rng(0)
        for _ in range(10):
            i, j = sorted(rng.choice(np.arange(grid.n_nodes), size=2, replace=False))
            inc = V[:, j] - V[:, i]
            target = (grid.nodes()[j] - grid.nodes()[i]) ** 1.2
            se_rel = math.sqrt(2.0 / len(V))
            assert abs(inc.var(ddof=1) - target) <= 5 * se_rel * target

    def test_determinism(self):
        grid = TimeGrid(32)
        a = sample_cholesky(0.7, grid, dim=2, n_paths=3, seed=9)
        b = sample_cholesky(0.7, grid, dim=2, n_paths=3, seed=9)
        for pa, pb in zip(a, b):
            assert np.array_equal(pa.values, pb.values)

    def test_components_independent(self):
        grid = TimeGrid(32)
        paths = sample_cholesky(0.7, grid, dim=2, n_paths=8_000, seed=5)
        V = np.array([p.values for p in paths])
        c = np.mean(V[:, 0, -1] * V[:, 1, -1])
        assert abs(c) <= 5 / math.sqrt(len(V))


class TestVolterraSampler:
    def test_marginal_variances_match_exact_sampler(self):
        grid = TimeGrid(512)
        paths = sample_volterra(0.7, grid, dim=1, n_paths=10_000, seed=6)
        V = np.array([p.values[0] for p in paths])
        for k in (64, 128, 256, 384, 512):
            t = grid.nodes()[k]
            assert V[:, k].var(ddof=1) == pytest.approx(t ** 1.4, rel=0.05)

    def test_single_step_weight_variance(self):
        # one-cell grid: increment variance is the on-grid variance identity
        grid = TimeGrid(1)
        W = _volterra_weights_cached(0.7, 1, 1.0)
        assert grid.mesh * float(W[0, 0] ** 2) == pytest.approx(grid.mesh ** 1.4)

    def test_determinism(self):
        grid = TimeGrid(16)
        a = sample_volterra(0.8, grid, dim=1, n_paths=2, seed=10)
        b = sample_volterra(0.8, grid, dim=1, n_paths=2, seed=10)
        assert np.array_equal(a[0].values, b[0].values)
        assert np.array_equal(a[1].values, b[1].values)

    def test_exact_on_grid_variance_normalization(self):
        W = _volterra_weights_cached(0.75, 64, 1.0)
        grid = TimeGrid(64)
        var = grid.mesh * np.sum(W**2, axis=1)
        assert np.allclose(var, grid.nodes()[1:] ** 1.5, rtol=1e-12)


class TestIncrementCovariance:
    def test_diagonal_is_stationary_variance(self):
        G = increment_covariance(0.75, 1.0 / 64, 16)
        assert np.allclose(np.diag(G), (1.0 / 64) ** 1.5)

    def test_matches_path_sampler(self):
        grid = TimeGrid(8)
        G = increment_covariance(0.7, grid.mesh, 8)
        paths = sample_cholesky(0.7, grid, dim=1, n_paths=20_000, seed=7)
        inc = np.diff(np.array([p.values[0] for p in paths]), axis=1)
        emp = inc.T @ inc / len(inc)
        se = np.sqrt((np.outer(np.diag(G), np.diag(G)) + G**2) / len(inc))
        assert np.all(np.abs(emp - G) <= 5 * se)


class TestTypeH:
    PAIRS = [(0.1, 0.3), (0.2, 0.9), (0.4, 0.45), (0.55, 0.6), (0.01, 0.99), (0.3, 0.35)]

    def test_exact_fbm_constants(self):
        rep = check_type_h(exact_fbm_model(0.75), self.PAIRS)
        assert rep.c1 == pytest.approx(1.0)
        assert rep.c2 == pytest.approx(1.0)
        assert rep.passed

    def test_mixed_derivative_ratio(self):
        # oracle: d_s d_t |t-s|^{2H} = -2H(2H-1)|t-s|^{2H-2} symbolically
        rep = check_type_h(exact_fbm_model(0.75), self.PAIRS)
        assert rep.c3 == pytest.approx(2 * 0.75 * (2 * 0.75 - 1), rel=5e-3)

    def test_exponent_mismatch_fails(self):
        model = CovarianceModel(Hurst(0.75), lambda s, t: abs(t - s), name="H-half")
        rep = check_type_h(model, self.PAIRS)
        assert not rep.passed

    def test_needs_distinct_pair(self):
        with pytest.raises(ValueError):
            check_type_h(exact_fbm_model(0.7), [(0.5, 0.5)])
