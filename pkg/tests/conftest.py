"""Shared fixtures: a session-scoped cache of backward solves.

The acceptance checks revisit the same solves from several angles (golden
prices, error ratios, single-step equivalence, Monte Carlo validation), so
results are memoized for the whole session.
"""

import pytest

from uvpricer import (ModelSpec, Objective, CallOnMax, Butterfly,
                      RefinementLevel, build_grid, build_control_set,
                      solve, price_at)


class SolveRunner:
    """Builds, runs and memoizes solves on the standard refinement ladder."""

    def __init__(self):
        self._cache = {}

    @staticmethod
    def spec(objective, sigma=(0.3, 0.5), rho=(0.3, 0.5)):
        return ModelSpec(r=0.05, T=0.25, X0=40.0, Y0=40.0,
                         sigma_x_range=sigma, sigma_y_range=sigma,
                         rho_range=rho, objective=Objective.parse(objective))

    @staticmethod
    def payoff(name):
        if name == "call":
            return CallOnMax(K=40.0)
        if name == "butterfly":
            return Butterfly(K1=34.0, K2=46.0)
        raise ValueError(name)

    def problem(self, objective="worst", payoff="call", level=0, M=None,
                width=1.2, n_mult=1.0, sigma=(0.3, 0.5), rho=(0.3, 0.5)):
        spec = self.spec(objective, sigma, rho)
        ladder = RefinementLevel(level)
        n = round(ladder.N * n_mult)
        # n_mult scales the half-width and interval count together, so the
        # node spacing is unchanged
        grid = build_grid(spec, width * n_mult, n, n,
                          M if M is not None else ladder.M)
        controls = build_control_set(spec, ladder.Qx, ladder.Qy)
        return spec, self.payoff(payoff), grid, controls

    def result(self, objective="worst", payoff="call", level=0, M=None,
               quadrature="trapezoid", width=1.2, n_mult=1.0,
               sigma=(0.3, 0.5), rho=(0.3, 0.5), record_policy=False):
        key = (objective, payoff, level, M, quadrature, width, n_mult,
               sigma, rho, record_policy)
        if key not in self._cache:
            spec, pay, grid, controls = self.problem(
                objective, payoff, level, M, width, n_mult, sigma, rho)
            self._cache[key] = solve(spec, pay, grid, controls,
                                     quadrature=quadrature,
                                     record_policy=record_policy)
        return self._cache[key]

    def price(self, **kw):
        return price_at(self.result(**kw), 40.0, 40.0)


@pytest.fixture(scope="session")
def runner():
    return SolveRunner()
