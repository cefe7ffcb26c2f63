"""Block statistics, concentration scaling, scale choices, sweep scenarios."""

import math

import numpy as np
import pytest

from fbmlab.fbm import FbmPath, Hurst, TimeGrid, sample_cholesky
from fbmlab.fields import quadratic2d
from fbmlab.norris import (
    CoarseQvConfig,
    SCENARIOS,
    coarse_qv,
    concentration_experiment,
    hs_bound_check,
    norris_sweep,
    scale_choices,
)


class TestConfig:
    def test_valid(self):
        cfg = CoarseQvConfig(delta=1 / 128, Delta=1 / 8)
        assert cfg.r == 16 and cfg.n_blocks == 8

    @pytest.mark.parametrize("d,D", [(1 / 100.5, 1 / 8), (1 / 128, 1 / 7),
                                     (1 / 128, 1.0), (1 / 8, 1 / 16)])
    def test_invalid(self, d, D):
        with pytest.raises(ValueError):
            CoarseQvConfig(delta=d, Delta=D)


class TestCoarseQv:
    def test_deterministic_ramp(self):
        # injected test path B(t) = t: every block sums r equal squares
        grid = TimeGrid(256)
        drv = FbmPath(Hurst(0.7), grid, grid.nodes()[None, :], 1, 0, "cholesky")
        cfg = CoarseQvConfig(delta=1 / 128, Delta=1 / 8)
        st = coarse_qv(drv, cfg)
        assert np.allclose(st.X[:, 0, 0], cfg.r * cfg.delta**2)

    def test_block_sums_match_full_quadratic_variation(self):
        grid = TimeGrid(512)
        drv = sample_cholesky(0.7, grid, dim=2, n_paths=1, seed=1)[0]
        cfg = CoarseQvConfig(delta=1 / 128, Delta=1 / 8)
        st = coarse_qv(drv, cfg)
        sub = drv.values[:, ::4]
        inc = np.diff(sub, axis=1)
        assert np.allclose(st.total_quadratic_variation(), inc @ inc.T)

    def test_mc_mean_matches_block_scale(self):
        h = 0.7
        grid = TimeGrid(256)
        cfg = CoarseQvConfig(delta=1 / 128, Delta=1 / 8)
        paths = sample_cholesky(h, grid, dim=2, n_paths=4000, seed=2)
        X = np.array([coarse_qv(p, cfg).X for p in paths])
        diag = X[:, :, 0, 0].ravel()
        T2 = cfg.r * cfg.delta ** (2 * h)
        se = diag.std(ddof=1) / math.sqrt(diag.size)
        assert abs(diag.mean() - T2) <= 5 * se
        cross = X[:, :, 0, 1].ravel()
        assert abs(cross.mean()) <= 5 * cross.std(ddof=1) / math.sqrt(cross.size)

    def test_scale_compatibility_enforced(self):
        grid = TimeGrid(100)
        drv = FbmPath(Hurst(0.7), grid, np.zeros((1, 101)), 1, 0, "cholesky")
        with pytest.raises(ValueError):
            coarse_qv(drv, CoarseQvConfig(delta=1 / 128, Delta=1 / 8))


class TestConcentration:
    def test_rate_scaling(self):
        cfg = CoarseQvConfig(delta=1 / 256, Delta=1 / 4)
        rep = concentration_experiment(0.75, cfg, n_paths=10_000, seed=3)
        assert rep["predicted_ratio"] == pytest.approx(2.0)
        assert abs(rep["rate_ratio_diag"] / rep["predicted_ratio"] - 1.0) <= 0.3
        assert abs(rep["rate_ratio_cross"] / rep["predicted_ratio"] - 1.0) <= 0.3

    def test_tails_are_exact_quantile_probabilities(self):
        cfg = CoarseQvConfig(delta=1 / 128, Delta=1 / 8)
        rep = concentration_experiment(0.7, cfg, n_paths=2000, seed=4)
        for h, q in rep["settings"][0]["tails_diag"]:
            assert 0 < q <= 0.5 and h > 0

    def test_no_sample_beyond_coarse_deviation_scale(self):
        # crude large-h check: 10 (delta N)^H / sqrt(N) dwarfs every sample
        h = 0.7
        cfg = CoarseQvConfig(delta=1 / 256, Delta=1 / 4)
        rep = concentration_experiment(h, cfg, n_paths=10_000, seed=5)
        s = rep["settings"][0]
        big = 10.0 * (s["delta"] * s["N"]) ** h / math.sqrt(s["N"])
        assert s["tails_diag"][-1][0] < big

    def test_needs_two_components(self):
        with pytest.raises(ValueError):
            concentration_experiment(0.7, CoarseQvConfig(1 / 64, 1 / 8), 100, dim=1)


class TestHsBound:
    def test_diagonal_and_single_increment(self):
        cfg = CoarseQvConfig(delta=1 / 256, Delta=1 / 2)
        rep = hs_bound_check(0.75, cfg)
        assert all(r["diag_exact"] for r in rep["rows"])
        assert rep["single_increment_hs2"] == pytest.approx(rep["single_increment_target"])

    def test_slope_near_prediction(self):
        cfg = CoarseQvConfig(delta=1 / 256, Delta=1 / 2)
        rep = hs_bound_check(0.75, cfg)
        assert abs(rep["slope"] - rep["predicted_slope"]) <= 0.3


class TestScaleChoices:
    def test_exponent_arithmetic(self):
        # direct arithmetic oracle at H = 0.75
        sc = scale_choices(1e-3, 0.75)
        a_delta = 1.0 / (0.75 * 1.25)
        a_Delta = 0.25 / (0.75 * 1.25)
        assert sc.delta <= 1e-3**a_delta
        assert sc.Delta >= 1e-3**a_Delta
        assert sc.delta < sc.Delta < 1.0
        assert sc.inv_delta % sc.inv_Delta == 0
        assert not sc.degenerate

    def test_alpha_lower_bound_over_hurst_grid(self):
        for H in np.linspace(0.55, 0.95, 9):
            sc = scale_choices(1e-2, H)
            assert sc.alpha >= (2.0 / 9.0) * (1 - H) - 1e-12

    def test_degenerate_near_one(self):
        assert scale_choices(0.95, 0.75).degenerate

    def test_eps_domain(self):
        for bad in (0.0, 1.0, 1.5):
            with pytest.raises(ValueError):
                scale_choices(bad, 0.7)


class TestSweep:
    def test_pure_noise_trivial_outcome(self):
        rep = norris_sweep("pure-noise", 0.7, [1e-1, 1e-2], n_paths=400,
                           seed=1, n_steps=64)
        # sup of a nondegenerate path is essentially never below 0.1
        assert np.all(rep.counts == 0)
        assert rep.q_hat == 1.0
        assert np.all(rep.marginal_y_probs == 0.0)

    def test_degenerate_trivial_outcome(self):
        rep = norris_sweep("degenerate", 0.7, [1e-1, 1e-3], n_paths=100, seed=2)
        # y = 0 always, but the magnitude clause never fires
        assert np.all(rep.counts == 0)
        assert np.all(rep.marginal_y_probs == 1.0)

    def test_pure_drift_trivial_outcome(self):
        rep = norris_sweep("pure-drift", 0.7, [0.5, 1e-2], n_paths=50, seed=3)
        assert np.all(rep.counts == 0)
        assert np.all(rep.marginal_y_probs == 0.0)

    def test_joint_counts_monotone_in_eps_and_q(self):
        # paired construction: the same paths feed every (eps, q) cell
        rep = norris_sweep("pullback", 0.7, [0.3, 0.1, 0.03], n_paths=300,
                           seed=4, n_steps=64)
        assert np.all(np.diff(rep.counts, axis=0) <= 0)   # smaller eps, fewer events
        assert np.all(np.diff(rep.counts, axis=1) >= 0)   # larger q, more events

    def test_pullback_chain_rule_consistency(self):
        # nonconstant integrand system: the reconstruction defect must be
        # small and shrink under refinement
        sysq = quadratic2d()
        d1 = norris_sweep("pullback", 0.7, [1e-1], n_paths=100, seed=5,
                          n_steps=128, system=sysq, v=[0.0, 1.0]).diagnostics
        d2 = norris_sweep("pullback", 0.7, [1e-1], n_paths=100, seed=5,
                          n_steps=512, system=sysq, v=[0.0, 1.0]).diagnostics
        assert d2["chain_defect_max"] < d1["chain_defect_max"]
        assert d2["chain_defect_max"] < 0.05

    def test_heisenberg_pullback_is_null(self):
        rep = norris_sweep("pullback", 0.7, [1e-1, 1e-2, 1e-3], n_paths=1000,
                           seed=6, n_steps=128)
        assert rep.q_hat >= 0.05
        assert rep.diagnostics["chain_defect_max"] <= 1e-12  # constant integrands
        assert len(rep.scale_table) == 3
        assert rep.alpha_guidance == pytest.approx(0.7 * 0.3 / (1.7 * 1.3))

    def test_unknown_scenario(self):
        with pytest.raises(ValueError):
            norris_sweep("nope", 0.7, [0.1], 10)

    def test_threads_do_not_change_results(self):
        kw = dict(eps_grid=[1e-1, 1e-2], n_paths=300, seed=7, n_steps=64,
                  batch_size=64)
        a = norris_sweep("pullback", 0.7, threads=1, **kw)
        b = norris_sweep("pullback", 0.7, threads=4, **kw)
        assert np.array_equal(a.counts, b.counts)
        assert np.array_equal(a.marginal_y_probs, b.marginal_y_probs)
