import math

import numpy as np
import pytest

from uvpricer import (ModelSpec, Objective, ControlPoint, ConfigurationError,
                      AlignmentError, build_grid, build_kernel,
                      trapezoid_weights, simpson_weights, augment,
                      fft_convolve, naive_convolve, extract_interior)
from uvpricer.conv import QuadratureWeights
from uvpricer.kernel import weight_matrix_natural, natural_to_first_column
from uvpricer.kernel import KernelSpectrum
import scipy.fft as sfft


def make_grid(N=16, M=10, X0=40.0):
    spec = ModelSpec(r=0.05, T=0.25, X0=X0, Y0=X0,
                     sigma_x_range=(0.3, 0.5), sigma_y_range=(0.3, 0.5),
                     rho_range=(0.3, 0.5), objective=Objective.WORST_CASE)
    return build_grid(spec, 1.2, N, N, M)


class TestTrapezoidWeights:
    def test_structure(self):
        qw = trapezoid_weights(4, 4)
        phi = qw.phi
        assert phi.shape == (9, 9)
        assert phi[0, 0] == 0.25 and phi[0, 4] == 0.5 and phi[4, 4] == 1.0
        assert np.all(phi > 0)

    def test_integrates_constant_exactly(self):
        N = 8
        qw = trapezoid_weights(N, N)
        # sum of weights x cell area = area of the dagger box
        assert qw.phi.sum() == pytest.approx((2 * N) ** 2)


class TestSimpsonWeights:
    def test_positive_and_total_mass(self):
        grid = make_grid(N=16)
        c = grid.x_hat0
        qw = simpson_weights(grid, [("x", c), ("y", c), ("diag",)])
        assert np.all(qw.phi > 0)
        # each 1D rule reproduces the segment lengths exactly
        assert qw.phi.sum() == pytest.approx((2 * grid.N) ** 2, rel=1e-12)

    def test_exact_for_cubics_with_axis_kinks(self):
        # oracle: analytic integral of x^3 y^3 + x y over the dagger box,
        # split at node-aligned kink lines (splitting cannot break exactness)
        grid = make_grid(N=16)
        xk = grid.x_hat0 + 4 * grid.dx
        yk = grid.y_hat0 - 6 * grid.dy
        qw = simpson_weights(grid, [("x", xk), ("y", yk)])
        x = grid.x_dagger_nodes
        y = grid.y_dagger_nodes
        f = (x ** 3)[:, None] * (y ** 3)[None, :] + x[:, None] * y[None, :]
        numeric = (qw.phi * f).sum() * grid.dx * grid.dy

        def prim(t):  # antiderivative of t^3
            return t ** 4 / 4.0

        ix = prim(grid.x_dagger_max) - prim(grid.x_dagger_min)
        iy = prim(grid.y_dagger_max) - prim(grid.y_dagger_min)
        jx = (grid.x_dagger_max ** 2 - grid.x_dagger_min ** 2) / 2.0
        jy = (grid.y_dagger_max ** 2 - grid.y_dagger_min ** 2) / 2.0
        assert numeric == pytest.approx(ix * iy + jx * jy, rel=1e-12)

    def test_misaligned_kink_rejected(self):
        grid = make_grid(N=16)
        with pytest.raises(AlignmentError):
            simpson_weights(grid, [("x", grid.x_hat0 + 0.37 * grid.dx)])

    def test_diagonal_needs_square_grid(self):
        spec = ModelSpec(r=0.05, T=0.25, X0=40.0, Y0=41.0,
                         sigma_x_range=(0.3, 0.5), sigma_y_range=(0.3, 0.5),
                         rho_range=(0.3, 0.5))
        grid = build_grid(spec, 1.2, 16, 16, 10)
        with pytest.raises(AlignmentError):
            simpson_weights(grid, [("diag",)])

    def test_unknown_kink_kind(self):
        grid = make_grid(N=16)
        with pytest.raises(ConfigurationError):
            simpson_weights(grid, [("z", 1.0)])


def delta_kernel(grid):
    """Kernel whose rescaled weight is 1 at offset (0, 0): conv = identity."""
    L = 3 * grid.N - 1
    natural = np.zeros((L, L))
    half = 3 * grid.N // 2 - 1
    natural[half, half] = 1.0
    first = natural_to_first_column(natural)
    return KernelSpectrum(control=None, first_column_matrix=first,
                          spectrum=sfft.fft2(first), dx=grid.dx, dy=grid.dy)


class TestConvolution:
    def test_delta_kernel_is_identity(self):
        grid = make_grid(N=8)
        rng = np.random.default_rng(1)
        v = rng.uniform(size=(2 * grid.N + 1,) * 2)
        phi = trapezoid_weights(grid.N, grid.J)
        u = extract_interior(fft_convolve(delta_kernel(grid), augment(v, phi)))
        mx, my = grid.interior_mask()
        expected = (phi.phi * v)[np.ix_(mx, my)]
        np.testing.assert_allclose(u, expected, atol=1e-13)

    def test_linearity(self):
        grid = make_grid(N=8)
        kern = build_kernel(ControlPoint(0.4, 0.35, 0.45), grid, 0.05)
        rng = np.random.default_rng(2)
        phi = trapezoid_weights(grid.N, grid.J)
        v1 = rng.uniform(size=(17, 17))
        v2 = rng.uniform(size=(17, 17))
        u12 = fft_convolve(kern, augment(2.0 * v1 + v2, phi))
        u1 = fft_convolve(kern, augment(v1, phi))
        u2 = fft_convolve(kern, augment(v2, phi))
        np.testing.assert_allclose(u12, 2.0 * u1 + u2, atol=1e-12)

    @pytest.mark.parametrize("N", [4, 8, 16])
    def test_fft_matches_compensated_sum(self, N):
        # randomized kernels and surfaces; the naive double sum is the oracle
        rng = np.random.default_rng(100 + N)
        grid = make_grid(N=N)
        phi = trapezoid_weights(grid.N, grid.J)
        for _ in range(5):
            ctrl = ControlPoint(rng.uniform(0.3, 0.5), rng.uniform(0.3, 0.5),
                                rng.uniform(-0.9, 0.9))
            kern = build_kernel(ctrl, grid, 0.05)
            natural = weight_matrix_natural(ctrl, grid, 0.05)
            v = rng.uniform(0.0, 40.0, size=(2 * N + 1, 2 * N + 1))
            fast = extract_interior(fft_convolve(kern, augment(v, phi)))
            slow = naive_convolve(natural, phi, v)
            scale = np.max(np.abs(slow))
            assert np.max(np.abs(fast - slow)) <= 1e-12 * max(scale, 1.0)

    def test_shape_mismatch_rejected(self):
        grid = make_grid(N=8)
        kern = build_kernel(ControlPoint(0.4, 0.35, 0.45), grid, 0.05)
        with pytest.raises(ValueError):
            fft_convolve(kern, np.zeros((5, 5)))
        with pytest.raises(ConfigurationError):
            augment(np.zeros((5, 5)), trapezoid_weights(8, 8))

    def test_extract_interior_shape(self):
        grid = make_grid(N=8)
        full = np.arange((3 * 8 - 1) ** 2, dtype=float).reshape(23, 23)
        inner = extract_interior(full)
        assert inner.shape == (7, 7)
        # interior node n maps to full row n + N
        np.testing.assert_array_equal(inner, full[5:12, 5:12])
