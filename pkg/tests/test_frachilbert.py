"""Fractional operators and the two inner-product representations."""

import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import gamma

from fbmlab.fbm import covariance
from fbmlab.frachilbert import (
    frac_derivative,
    frac_derivative_minus,
    frac_integral,
    frac_pairing_ratio,
    frac_pairing_tail_bound,
    h_inner_frac,
    h_inner_kernel,
    h_norm,
    h_norm_lower_bound,
    kernel_cell_masses,
    representation_report,
)
from fbmlab.grids import SampledPath, TimeGrid

from conftest import fbm_paths, path_of


def indicator(grid: TimeGrid, upto: float) -> SampledPath:
    # step representation: node value = value on the cell to its right
    return SampledPath(grid, (grid.nodes() < upto - 1e-12).astype(float))


class TestFracIntegral:
    def test_constant_power_rule(self, grid1024):
        # I^a 1 (t) = t^a / Gamma(1+a)
        out = frac_integral(path_of(grid1024, np.ones_like), 0.25)
        assert out.values[-1] == pytest.approx(1.0 / gamma(1.25), rel=1e-10)
        t = grid1024.nodes()[1:]
        assert np.allclose(out.values[1:], t**0.25 / gamma(1.25), rtol=1e-9)

    def test_zero(self, grid1024):
        out = frac_integral(path_of(grid1024, np.zeros_like), 0.5)
        assert np.all(out.values == 0.0)

    def test_linear_input(self, grid1024):
        # oracle: high-resolution quadrature of the Beta integral
        target, _ = quad(lambda s: (1 - s) ** (-0.5) * s / gamma(0.5), 0.0, 1.0)
        out = frac_integral(path_of(grid1024, lambda t: t), 0.5)
        assert out.values[-1] == pytest.approx(target, abs=2 * grid1024.mesh)
        assert target == pytest.approx(1.0 / gamma(2.5), rel=1e-9)

    def test_alpha_validation(self, grid256):
        for bad in (0.0, 1.0, -0.5):
            with pytest.raises(ValueError):
                frac_integral(path_of(grid256, lambda t: t), bad)


class TestFracDerivative:
    def test_inverts_integral_away_from_origin(self):
        # the first nodes cannot determine the t^alpha cusp of the
        # intermediate, so the decay is measured past a fixed window
        alpha, errs, ns = 0.3, [], (256, 512, 1024, 2048)
        for n in ns:
            grid = TimeGrid(n)
            D = frac_derivative(frac_integral(path_of(grid, np.ones_like), alpha), alpha)
            errs.append(np.max(np.abs(D.values[n // 16:] - 1.0)))
        slope = np.polyfit(np.log(ns), np.log(errs), 1)[0]
        assert slope <= -0.5
        assert errs[-1] < 2e-4

    def test_power_input_gives_constant(self):
        # Riemann-Liouville power rule with mu = alpha: result Gamma(1+alpha)
        alpha = 0.4
        grid = TimeGrid(1024)
        D = frac_derivative(path_of(grid, lambda t: t**alpha), alpha)
        assert np.max(np.abs(D.values[8:] - gamma(1 + alpha))) < 5e-3

    def test_zero(self, grid256):
        out = frac_derivative(path_of(grid256, np.zeros_like), 0.3)
        assert np.all(out.values == 0.0)

    def test_nonzero_start_warns(self, grid256):
        with pytest.warns(UserWarning):
            frac_derivative(path_of(grid256, lambda t: 1.0 + t), 0.3)


class TestFracDerivativeMinus:
    def test_zero(self, grid256):
        out = frac_derivative_minus(path_of(grid256, np.zeros_like), 0.2)
        assert np.all(out.values == 0.0)

    def test_adjoint_identity(self):
        # oracle: direct quadrature of both pairings for a boundary-vanishing pair
        alpha = 0.2
        diffs = []
        for n in (512, 1024):
            grid = TimeGrid(n)
            t = grid.nodes()
            g = SampledPath(grid, t**2 * (1 - t) ** 2)
            h = SampledPath(grid, t * (1 - t))
            lhs = np.trapezoid(frac_derivative(g, alpha).values * h.values, dx=grid.mesh)
            rhs = np.trapezoid(g.values * frac_derivative_minus(h, alpha).values, dx=grid.mesh)
            diffs.append(abs(lhs - rhs) / abs(lhs))
        assert diffs[-1] < 2e-3
        assert diffs[1] < diffs[0]

    def test_l2_norm_stable_under_refinement(self):
        # Holder-0.6 path vanishing at the horizon, alpha = 0.2 < 0.6
        norms = []
        for n in (512, 1024, 2048):
            grid = TimeGrid(n)
            t = grid.nodes()
            f = SampledPath(grid, t**0.6 * (1 - t) ** 0.6)
            Dm = frac_derivative_minus(f, 0.2)
            norms.append(math.sqrt(np.trapezoid(Dm.values**2, dx=grid.mesh)))
        assert abs(norms[-1] - norms[0]) / norms[-1] < 0.01

    def test_nonvanishing_horizon_warns(self, grid256):
        with pytest.warns(UserWarning):
            out = frac_derivative_minus(path_of(grid256, lambda t: 1.0 + 0 * t), 0.2)
        assert np.isinf(out.values[-1])


class TestKernelInnerProduct:
    def test_unit_indicator_norm(self, grid1024):
        # closed form: H(2H-1) double integral of |s-t|^{2H-2} over the unit
        # square equals 1 = R(1,1)
        one = indicator(grid1024, 1.0)
        assert h_inner_kernel(one, one, 0.75) == pytest.approx(1.0, rel=1e-12)

    @pytest.mark.parametrize("t,s", [(1.0, 0.5), (0.75, 0.25), (0.5, 0.5), (1.0, 0.125)])
    def test_indicator_pair_reproduces_covariance(self, grid1024, t, s):
        H = 0.7
        val = h_inner_kernel(indicator(grid1024, t), indicator(grid1024, s), H)
        assert val == pytest.approx(covariance(H, t, s), rel=1e-10)

    def test_orthogonal_components(self, grid256):
        f = np.zeros((257, 2))
        g = np.zeros((257, 2))
        f[:, 0] = np.sin(grid256.nodes())
        g[:, 1] = grid256.nodes()
        assert h_inner_kernel(SampledPath(grid256, f), SampledPath(grid256, g), 0.7) == 0.0

    def test_bilinear_symmetric(self, grid256):
        rng = np.random.default_rng(5)
        a = SampledPath(grid256, rng.standard_normal(257))
        b = SampledPath(grid256, rng.standard_normal(257))
        c = SampledPath(grid256, rng.standard_normal(257))
        H = 0.65
        assert h_inner_kernel(a, b, H) == pytest.approx(h_inner_kernel(b, a, H), rel=1e-12)
        lhs = h_inner_kernel(SampledPath(grid256, 2 * a.values + c.values), b, H)
        assert lhs == pytest.approx(2 * h_inner_kernel(a, b, H) + h_inner_kernel(c, b, H),
                                    rel=1e-10)

    def test_gram_psd_on_corpus(self, grid256):
        H = 0.7
        B = fbm_paths(H, grid256, 1, 8, 77)[:, 0, :]
        paths = [SampledPath(grid256, b) for b in B]
        G = np.array([[h_inner_kernel(p, q, H) for q in paths] for p in paths])
        eigs = np.linalg.eigvalsh(0.5 * (G + G.T))
        assert eigs.min() >= -1e-10 * max(eigs.max(), 1.0)

    def test_cell_masses_telescoping(self):
        w = kernel_cell_masses(0.7, 64, 1.0 / 64)
        H2 = 1.4
        total = 64 * w[0] + 2 * np.sum((64 - np.arange(1, 64)) * w[1:])
        assert total * 0.7 * 0.4 == pytest.approx(1.0, rel=1e-12)


class TestFracInnerProduct:
    def test_zero_and_symmetry(self, grid256):
        z = path_of(grid256, np.zeros_like)
        f = path_of(grid256, np.sin)
        g = path_of(grid256, lambda t: t**2)
        assert h_inner_frac(z, f, 0.7) == 0.0
        assert h_inner_frac(f, g, 0.7) == h_inner_frac(g, f, 0.7)

    def test_indicator_agreement_at_representative_hurst(self, grid1024):
        # at H = 0.7 the two quadratic forms differ by under 0.5%, so the
        # numerical routes must agree within 1%
        H = 0.7
        for t, s in ((1.0, 0.5), (0.75, 0.25)):
            k = h_inner_kernel(indicator(grid1024, t), indicator(grid1024, s), H)
            f = h_inner_frac(indicator(grid1024, t), indicator(grid1024, s), H)
            assert f == pytest.approx(k, rel=0.01)

    def test_proportionality_constant_measured(self, grid1024):
        # the kernel form and the L2-of-fractional-integral form are
        # proportional with ratio H(2H-1) pi / (Gamma(2-2H) sin(pi(H-1/2)));
        # the measured ratio must track the Beta-integral prediction
        for H in (0.6, 0.75, 0.9):
            phi = indicator(grid1024, 1.0)
            psi = indicator(grid1024, 0.5)
            measured = h_inner_kernel(phi, psi, H) / h_inner_frac(phi, psi, H)
            assert measured == pytest.approx(frac_pairing_ratio(H), rel=5e-3)

    def test_tail_bound_positive_and_small(self, grid1024):
        phi = indicator(grid1024, 1.0)
        bound = frac_pairing_tail_bound(phi, phi, 0.7, horizon=8.0)
        assert 0 < bound < 0.05

    def test_representation_corpus(self):
        rep = representation_report(0.7, n_steps=1024, n_pairs=12, seed=1)
        assert rep["max_normalized_diff"] <= 0.01
        assert rep["analytic_form_ratio"] == pytest.approx(1.00494, abs=2e-4)


class TestNormLowerBound:
    def test_zero_path_flagged(self, grid256):
        rep = h_norm_lower_bound(path_of(grid256, np.zeros_like), 0.3, 0.7)
        assert rep.degenerate

    def test_constant_path(self, grid1024):
        # seminorm + sup convention keeps the ratio finite on constants
        rep = h_norm_lower_bound(path_of(grid1024, np.ones_like), 0.3, 0.75)
        assert rep.h_norm == pytest.approx(1.0, rel=1e-10)
        assert rep.holder_norm == pytest.approx(1.0)
        assert rep.bound_ratio == pytest.approx(1.0, rel=1e-9)

    def test_gamma_precondition(self, grid256):
        with pytest.raises(ValueError):
            h_norm_lower_bound(path_of(grid256, lambda t: t), 0.15, 0.7)

    def test_family_ratio_bounded_below(self):
        grid = TimeGrid(256)
        B = fbm_paths(0.7, grid, 1, 50, 13)[:, 0, :]
        ratios = [h_norm_lower_bound(SampledPath(grid, b), 0.3, 0.7).bound_ratio
                  for b in B]
        assert min(ratios) > 0.0
