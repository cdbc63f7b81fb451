import math

import numpy as np
import pytest

from uvpricer import (ModelSpec, Objective, ControlPoint, ConfigurationError,
                      build_grid, psi, green_density, green_density_degenerate,
                      rho_hat, build_kernel, weight_sum_diagnostic)
from uvpricer.kernel import (GreenParams, weight_matrix_natural,
                             natural_to_first_column, truncated_weight_block)


def make_spec():
    return ModelSpec(r=0.05, T=0.25, X0=40.0, Y0=40.0,
                     sigma_x_range=(0.3, 0.5), sigma_y_range=(0.3, 0.5),
                     rho_range=(0.3, 0.5), objective=Objective.WORST_CASE)


CONTROL = ControlPoint(0.4, 0.35, 0.45)
R = 0.05
DTAU = 0.005


class TestGreenParams:
    def test_from_control(self):
        p = GreenParams.from_control(CONTROL, R, DTAU)
        assert p.mu_x == pytest.approx((0.5 * 0.4 ** 2 - R) * DTAU)
        assert p.kappa_y == pytest.approx(0.35 * math.sqrt(DTAU))
        assert p.discount == pytest.approx(math.exp(-R * DTAU))


class TestGreenDensity:
    def fine_lattice(self, half=0.2, n=4001):
        x = np.linspace(-half, half, n)
        return x, x[1] - x[0]

    def test_mass_is_discount(self):
        # oracle: dense lattice sum of the density
        x, dx = self.fine_lattice()
        g = green_density(x[:, None], x[None, :], CONTROL, DTAU, R)
        total = g.sum() * dx * dx
        assert total == pytest.approx(math.exp(-R * DTAU), abs=1e-10)

    def test_nonnegative(self):
        x, _ = self.fine_lattice(n=101)
        g = green_density(x[:, None], x[None, :], CONTROL, DTAU, R)
        assert np.all(g >= 0)

    def test_fourier_transform_matches_psi(self):
        # the density's Fourier transform must equal exp(psi * dtau)
        x, dx = self.fine_lattice()
        g = green_density(x[:, None], x[None, :], CONTROL, DTAU, R)
        for eta, zeta in [(0.0, 0.0), (3.0, -2.0), (10.0, 7.5)]:
            phase = np.exp(-1j * (eta * x[:, None] + zeta * x[None, :]))
            transform = (g * phase).sum() * dx * dx
            expected = np.exp(psi(eta, zeta, CONTROL, R) * DTAU)
            assert abs(transform - expected) < 1e-9

    def test_rejects_degenerate_control(self):
        with pytest.raises(ConfigurationError):
            green_density(0.0, 0.0, ControlPoint(0.4, 0.4, 1.0), DTAU, R)


class TestDegenerateDensity:
    def test_reduces_to_marginal_times_mollifier(self):
        # integrating out y must recover the discounted 1D Gaussian in x
        ctrl = ControlPoint(0.4, 0.3, 1.0)
        p = GreenParams.from_control(ctrl, R, DTAU)
        y = np.linspace(-0.3, 0.3, 60001)
        dy = y[1] - y[0]
        for xv in (0.0, 0.01, -0.02):
            g = green_density_degenerate(xv, y, ctrl, DTAU, R, rho_hat=0.99)
            marginal = g.sum() * dy
            zx = (xv - p.mu_x) / p.kappa_x
            expected = p.discount * math.exp(-0.5 * zx * zx) \
                / (math.sqrt(2 * math.pi) * p.kappa_x)
            assert marginal == pytest.approx(expected, rel=1e-8)

    def test_requires_degenerate_control(self):
        with pytest.raises(ConfigurationError):
            green_density_degenerate(0.0, 0.0, CONTROL, DTAU, R, rho_hat=0.99)

    def test_rho_hat_formula(self):
        dy, ky = 0.01, 0.05
        assert rho_hat(dy, ky) == pytest.approx(
            math.sqrt(1.0 - (dy / (6.0 * ky)) ** 2))

    def test_rho_hat_coarse_grid_rejected(self):
        with pytest.raises(ConfigurationError):
            rho_hat(0.31, 0.05)


class TestKernelAssembly:
    def make_grid(self, N=16):
        return build_grid(make_spec(), 1.2, N, N, 50)

    def test_layout_reordering(self):
        # encode each natural offset in its entry and verify the circulant
        # placement: offset o lands at index o mod (3N-1)
        N = 8
        L = 3 * N - 1
        half = 3 * N // 2 - 1
        natural = np.arange(L * L, dtype=float).reshape(L, L)
        first = natural_to_first_column(natural)
        for ox in (-half, -1, 0, 1, half):
            for oy in (-half, 0, 2):
                assert first[ox % L, oy % L] == natural[ox + half, oy + half]

    def test_weights_nonnegative_and_mass(self):
        # at production resolution (dx well below kappa) the lattice sum of
        # the Gaussian is accurate to machine precision
        grid = self.make_grid(N=128)
        kern = build_kernel(CONTROL, grid, R)
        assert np.all(kern.first_column_matrix >= 0)
        assert weight_sum_diagnostic(kern, R, grid.dtau) < 1e-12

    def test_natural_matrix_matches_density(self):
        grid = self.make_grid()
        natural = weight_matrix_natural(CONTROL, grid, R)
        half = 3 * grid.N // 2 - 1
        for a, b in [(half, half), (half + 3, half - 2), (0, half)]:
            ox, oy = (a - half) * grid.dx, (b - half) * grid.dy
            expected = green_density(ox, oy, CONTROL, grid.dtau, R) \
                * grid.dx * grid.dy
            assert natural[a, b] == pytest.approx(expected, rel=1e-13)

    def test_truncated_block_matches_natural(self):
        grid = self.make_grid(N=64)
        block, rx, ry = truncated_weight_block(CONTROL, grid, R)
        natural = weight_matrix_natural(CONTROL, grid, R)
        half = 3 * grid.N // 2 - 1
        sub = natural[half - rx:half + rx + 1, half - ry:half + ry + 1]
        np.testing.assert_allclose(block, sub, rtol=0, atol=1e-18)
        # dropped tail mass is negligible
        assert abs(block.sum() - natural.sum()) < 1e-15

    def test_degenerate_kernel_uses_compensated_correlation(self):
        # |rho| = 1 sampling must keep the exact per-step variances: the
        # mollified kernel equals the nondegenerate density at rho_eff
        grid = self.make_grid(N=128)
        ctrl = ControlPoint(0.5, 0.5, 1.0)
        natural = weight_matrix_natural(ctrl, grid, R)
        p = GreenParams.from_control(ctrl, R, grid.dtau)
        rho_eff = math.sqrt(1.0 - (grid.dy / p.kappa_y) ** 2)
        surrogate = ControlPoint(0.5, 0.5, rho_eff)
        expected = weight_matrix_natural(surrogate, grid, R)
        np.testing.assert_allclose(natural, expected, rtol=1e-12)
