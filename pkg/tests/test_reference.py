import math

import numpy as np
import pytest
from scipy.stats import multivariate_normal, norm

from uvpricer import (ModelSpec, Objective, CallOnMax, ControlPoint,
                      ControlPolicy, ConfigurationError, build_grid,
                      build_control_set, solve, price_at,
                      bivariate_normal_cdf, black_scholes_call,
                      stulz_call_on_min, stulz_call_on_max,
                      McConfig, McResult, interpolate_control, mc_validate)


class TestBivariateNormalCdf:
    CASES = [(0.3, -0.2, 0.6), (1.5, 0.5, -0.8), (-1.0, 2.0, 0.95),
             (0.2, 0.3, 0.99), (1.0, 1.0, -0.99), (0.0, 0.0, 0.0),
             (2.5, -2.5, 0.5)]

    @pytest.mark.parametrize("a,b,rho", CASES)
    def test_against_scipy(self, a, b, rho):
        # oracle: scipy's independently implemented multivariate normal CDF
        expected = multivariate_normal(cov=[[1.0, rho], [rho, 1.0]]).cdf([a, b])
        assert bivariate_normal_cdf(a, b, rho) == pytest.approx(expected, abs=5e-9)

    def test_quadrant_identity_zero_rho(self):
        assert bivariate_normal_cdf(0.0, 0.0, 0.0) == pytest.approx(0.25, abs=1e-14)

    def test_arcsine_identity(self):
        rho = 0.5
        expected = 0.25 + math.asin(rho) / (2.0 * math.pi)
        assert bivariate_normal_cdf(0.0, 0.0, rho) == pytest.approx(expected, abs=1e-14)

    @pytest.mark.parametrize("a,b,rho", CASES)
    def test_reflection_identity(self, a, b, rho):
        # P(Z1<=a) decomposes over {Z2<=b} and {-Z2<=-b}
        total = bivariate_normal_cdf(a, b, rho) + bivariate_normal_cdf(a, -b, -rho)
        assert total == pytest.approx(norm.cdf(a), abs=1e-14)

    def test_perfect_correlation_exact(self):
        for a, b in [(0.3, -0.2), (1.0, 2.0), (-0.5, -0.5)]:
            assert bivariate_normal_cdf(a, b, 1.0) == pytest.approx(
                norm.cdf(min(a, b)), abs=1e-15)
            expected = max(norm.cdf(a) + norm.cdf(b) - 1.0, 0.0)
            assert bivariate_normal_cdf(a, b, -1.0) == pytest.approx(
                expected, abs=1e-15)

    def test_invalid_rho(self):
        with pytest.raises(ConfigurationError):
            bivariate_normal_cdf(0.0, 0.0, 1.5)


class TestClosedForms:
    def test_black_scholes_against_quadrature(self):
        # oracle: direct lognormal expectation via dense quadrature
        S, K, r, T, sig = 40.0, 42.0, 0.05, 0.25, 0.35
        z = np.linspace(-10, 10, 400001)
        dz = z[1] - z[0]
        ST = S * np.exp((r - 0.5 * sig * sig) * T + sig * math.sqrt(T) * z)
        expected = math.exp(-r * T) * np.sum(
            np.maximum(ST - K, 0.0) * norm.pdf(z)) * dz
        assert black_scholes_call(S, K, r, T, sig) == pytest.approx(expected, abs=1e-8)

    def test_call_on_max_against_quadrature(self):
        # oracle: 2D lognormal expectation via dense tensor quadrature
        X, Y, K, r, T = 40.0, 40.0, 40.0, 0.05, 0.25
        sx, sy, rho = 0.5, 0.5, 0.3
        z = np.linspace(-8, 8, 8001)
        dz = z[1] - z[0]
        w = norm.pdf(z)
        sqT = math.sqrt(T)
        expected = 0.0
        for start in range(0, z.size, 500):  # chunked to bound memory
            zx = z[start:start + 500, None]
            zy = rho * zx + math.sqrt(1 - rho * rho) * z[None, :]
            ST_x = X * np.exp((r - 0.5 * sx ** 2) * T + sx * sqT * zx)
            ST_y = Y * np.exp((r - 0.5 * sy ** 2) * T + sy * sqT * zy)
            payoff = np.maximum(np.maximum(ST_x, ST_y) - K, 0.0)
            expected += float(w[start:start + 500] @ payoff @ w)
        expected *= math.exp(-r * T) * dz * dz
        assert stulz_call_on_max(X, Y, K, r, T, sx, sy, rho) == pytest.approx(
            expected, abs=1e-6)

    def test_min_max_parity(self):
        X, Y, K, r, T, sx, sy, rho = 40.0, 38.0, 40.0, 0.05, 0.25, 0.4, 0.35, 0.2
        total = stulz_call_on_min(X, Y, K, r, T, sx, sy, rho) \
            + stulz_call_on_max(X, Y, K, r, T, sx, sy, rho)
        expected = black_scholes_call(X, K, r, T, sx) \
            + black_scholes_call(Y, K, r, T, sy)
        assert total == pytest.approx(expected, abs=1e-12)

    def test_perfectly_anticorrelated_equal_vols(self):
        # rho = -1, equal sigmas: handled by the 1D reduction
        val = stulz_call_on_max(40.0, 40.0, 40.0, 0.05, 0.25, 0.5, 0.5, -1.0)
        assert val == pytest.approx(8.41540757, abs=5e-9)

    def test_perfectly_correlated_equal_vols_is_vanilla(self):
        # rho = +1, equal sigmas: the two assets are identical
        val = stulz_call_on_max(40.0, 40.0, 40.0, 0.05, 0.25, 0.5, 0.5, 1.0)
        expected = black_scholes_call(40.0, 40.0, 0.05, 0.25, 0.5)
        assert val == pytest.approx(expected, abs=1e-8)


def small_problem():
    spec = ModelSpec(r=0.05, T=0.25, X0=40.0, Y0=40.0,
                     sigma_x_range=(0.3, 0.5), sigma_y_range=(0.3, 0.5),
                     rho_range=(0.3, 0.5), objective=Objective.WORST_CASE)
    grid = build_grid(spec, 1.2, 64, 64, 10)
    cs = build_control_set(spec, 1, 1)
    payoff = CallOnMax(K=40.0)
    result = solve(spec, payoff, grid, cs)
    return spec, grid, cs, payoff, result


class TestInterpolateControl:
    def test_node_lookup(self):
        spec, grid, cs, payoff, result = small_problem()
        table = np.array([(c.sigma_x, c.sigma_y, c.rho) for c in cs])
        indices = result.policy.indices
        # at an interior node the interpolation is a pure lookup
        n, j = 5, -3
        X = math.exp(grid.x_hat0 + n * grid.dx)
        Y = math.exp(grid.y_hat0 + j * grid.dy)
        sx, sy, rho = interpolate_control(indices, table, grid, 1, X, Y)
        i = n + grid.N // 2 - 1
        k = j + grid.J // 2 - 1
        expected = table[indices[0, i, k]]
        assert (float(sx), float(sy), float(rho)) == tuple(expected)

    def test_clamps_outside_hull(self):
        spec, grid, cs, payoff, result = small_problem()
        table = np.array([(c.sigma_x, c.sigma_y, c.rho) for c in cs])
        sx, sy, rho = interpolate_control(result.policy.indices, table, grid,
                                          1, 1e-6, 1e6)
        lo, hi = spec.sigma_x_range
        assert lo <= float(sx) <= hi and lo <= float(sy) <= hi

    def test_invalid_step_index(self):
        spec, grid, cs, payoff, result = small_problem()
        table = np.array([(c.sigma_x, c.sigma_y, c.rho) for c in cs])
        with pytest.raises(ConfigurationError):
            interpolate_control(result.policy.indices, table, grid, 0, 40.0, 40.0)


class TestMcValidate:
    def test_standard_error_scales_with_paths(self):
        spec, grid, cs, payoff, result = small_problem()
        small = mc_validate(result.policy, spec, payoff, grid,
                            McConfig(n_paths=2000, seed=3))
        large = mc_validate(result.policy, spec, payoff, grid,
                            McConfig(n_paths=32000, seed=3))
        # SE should shrink like 1/sqrt(paths): factor 4 within sampling noise
        assert small.std_error / large.std_error == pytest.approx(4.0, rel=0.25)

    def test_seed_reproducible(self):
        spec, grid, cs, payoff, result = small_problem()
        a = mc_validate(result.policy, spec, payoff, grid,
                        McConfig(n_paths=5000, seed=11))
        b = mc_validate(result.policy, spec, payoff, grid,
                        McConfig(n_paths=5000, seed=11))
        assert a.mean == b.mean and a.std_error == b.std_error

    def test_fixed_control_recovers_constant_coefficient_price(self):
        spec, grid, cs, payoff, result = small_problem()
        idx = cs.index(ControlPoint(0.5, 0.5, 0.3))
        policy = ControlPolicy.constant(idx, grid.M, grid, cs)
        mc = mc_validate(policy, spec, payoff, grid,
                         McConfig(n_paths=60000, seed=5))
        ref = stulz_call_on_max(40.0, 40.0, 40.0, 0.05, 0.25, 0.5, 0.5, 0.3)
        assert mc.ci_low <= ref <= mc.ci_high

    def test_policy_grid_mismatch_rejected(self):
        spec, grid, cs, payoff, result = small_problem()
        bad = ControlPolicy.constant(0, grid.M + 1, grid, cs)
        with pytest.raises(ConfigurationError):
            mc_validate(bad, spec, payoff, grid, McConfig(n_paths=100, seed=0))

    def test_report_fields(self):
        res = McResult(mean=1.0, std_error=0.1, ci_low=0.8, ci_high=1.2,
                       n_paths=100, seed=0)
        rep = res.report()
        assert rep["mean"] == 1.0 and res.contains(0.9) and not res.contains(0.5)
