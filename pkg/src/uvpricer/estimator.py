"""Scikit-learn style facade over the pricing pipeline.

UncertainVolatilityPricer packages model configuration, grid construction,
control-set discretization and the backward solve behind the familiar
get_params / set_params / fit / predict protocol, so the pricer slots into
generic parameter-sweep and caching tooling without a scikit-learn dependency.
fit() runs the solve; predict() interpolates prices at spot pairs.
"""

from __future__ import annotations

import inspect

import numpy as np

from .model import (ModelSpec, Objective, CallOnMax, Butterfly,
                    ConfigurationError, build_control_set)
from .domain import RefinementLevel, build_grid, truncation_half_width
from .solver import solve, price_at

__all__ = ["UncertainVolatilityPricer"]


class UncertainVolatilityPricer:
    """Worst/best-case two-asset option pricer with interval-valued parameters.

    Parameters mirror the model and discretization knobs: market inputs
    (r, T, spots), the uncertainty intervals, the payoff selection, the
    refinement level of the standard ladder, and solver options.  half_width
    of None sizes the log-price box from the kernel tail bound at tolerance
    ``epsilon``; a float pins it explicitly.
    """

    def __init__(self, r=0.05, T=0.25, X0=40.0, Y0=40.0,
                 sigma_x_range=(0.3, 0.5), sigma_y_range=(0.3, 0.5),
                 rho_range=(0.3, 0.5), objective="worst",
                 payoff="call_on_max", K=40.0, K1=34.0, K2=46.0,
                 level=0, half_width=1.2, epsilon=1e-10,
                 quadrature="trapezoid", engine="fast", record_policy=False):
        args = inspect.signature(type(self).__init__).parameters
        values = locals()
        for name in args:
            if name != "self":
                setattr(self, name, values[name])

    # --- sklearn-style parameter protocol ---------------------------------
    @classmethod
    def _param_names(cls):
        return [p for p in inspect.signature(cls.__init__).parameters if p != "self"]

    def get_params(self, deep=True):
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        valid = set(self._param_names())
        for name, value in params.items():
            if name not in valid:
                raise ConfigurationError(
                    f"invalid parameter {name!r} for {type(self).__name__}")
            setattr(self, name, value)
        return self

    # --- pipeline ----------------------------------------------------------
    def _build(self):
        spec = ModelSpec(
            r=self.r, T=self.T, X0=self.X0, Y0=self.Y0,
            sigma_x_range=tuple(self.sigma_x_range),
            sigma_y_range=tuple(self.sigma_y_range),
            rho_range=tuple(self.rho_range),
            objective=Objective.parse(self.objective),
        )
        if self.payoff == "call_on_max":
            payoff = CallOnMax(K=self.K)
        elif self.payoff == "butterfly":
            payoff = Butterfly(K1=self.K1, K2=self.K2)
        elif callable(self.payoff):
            payoff = self.payoff
        else:
            raise ConfigurationError(f"unknown payoff {self.payoff!r}")
        ladder = RefinementLevel(self.level)
        if self.half_width is None:
            width = truncation_half_width(self.epsilon, spec, spec.T / ladder.M)
        else:
            width = float(self.half_width)
        grid = build_grid(spec, width, ladder.N, ladder.J, ladder.M)
        controls = build_control_set(spec, ladder.Qx, ladder.Qy)
        return spec, payoff, grid, controls

    def fit(self, X=None, y=None):
        """Solve the pricing problem; X and y are accepted for API symmetry."""
        spec, payoff, grid, controls = self._build()
        self.result_ = solve(spec, payoff, grid, controls,
                             quadrature=self.quadrature, engine=self.engine,
                             record_policy=self.record_policy)
        self.spec_ = spec
        self.payoff_ = payoff
        self.grid_ = grid
        self.control_set_ = controls
        return self

    def predict(self, XY=None):
        """Prices at spot pairs; default is the single configured spot.

        XY : array-like of shape (n, 2) of (X, Y) spot prices, or None.
        """
        if not hasattr(self, "result_"):
            raise ConfigurationError("call fit() before predict()")
        if XY is None:
            return np.array([price_at(self.result_, self.X0, self.Y0)])
        XY = np.atleast_2d(np.asarray(XY, dtype=float))
        return np.array([price_at(self.result_, x, y) for x, y in XY])

    def price(self):
        """Convenience scalar: the fitted price at the configured spots."""
        return float(self.predict()[0])
