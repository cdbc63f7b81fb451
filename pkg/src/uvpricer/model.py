"""Market model configuration, payoff functions, and the discretized control set.

The model prices a two-asset option when the volatilities (sigma_x, sigma_y)
and the correlation rho are only known to lie in closed intervals.  The
worst-case (best-case) price is the sup (inf) of the discounted expected
payoff over all admissible parameter processes.  Optimal controls live on the
boundary of the admissible box: at least one volatility sits at an interval
endpoint and rho is at one of its endpoints, so the search set is discretized
as a lattice on that boundary.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Objective",
    "ModelSpec",
    "PayoffSpec",
    "CallOnMax",
    "Butterfly",
    "CustomPayoff",
    "ControlPoint",
    "DiscreteControlSet",
    "ConfigurationError",
    "evaluate_payoff",
    "build_control_set",
]


class ConfigurationError(ValueError):
    """Raised for invalid model / grid / control-set configuration."""


class Objective(enum.Enum):
    WORST_CASE = "worst"  # seller's price: sup over controls
    BEST_CASE = "best"    # buyer's price: inf over controls

    @classmethod
    def parse(cls, text):
        text = str(text).strip().lower()
        for obj in cls:
            if text in (obj.value, obj.name.lower()):
                return obj
        raise ConfigurationError(f"unknown objective {text!r}; use 'worst' or 'best'")


@dataclass(frozen=True)
class ModelSpec:
    """Market and uncertainty parameters.

    r : risk-free rate (per year), > 0
    T : horizon in years, > 0
    X0, Y0 : spot prices, > 0
    sigma_x_range, sigma_y_range : closed volatility intervals (per sqrt-year)
    rho_range : closed correlation interval, subset of [-1, 1]
    objective : WORST_CASE (sup) or BEST_CASE (inf)
    """

    r: float
    T: float
    X0: float
    Y0: float
    sigma_x_range: tuple
    sigma_y_range: tuple
    rho_range: tuple
    objective: Objective = Objective.WORST_CASE

    def __post_init__(self):
        if not self.r > 0:
            raise ConfigurationError(f"r must be > 0, got {self.r}")
        if not self.T > 0:
            raise ConfigurationError(f"T must be > 0, got {self.T}")
        if not (self.X0 > 0 and self.Y0 > 0):
            raise ConfigurationError("spot prices must be > 0")
        for name, rng in (("sigma_x_range", self.sigma_x_range),
                          ("sigma_y_range", self.sigma_y_range)):
            lo, hi = rng
            if not (0 < lo <= hi and math.isfinite(hi)):
                raise ConfigurationError(f"{name} must satisfy 0 < lo <= hi, got {rng}")
        lo, hi = self.rho_range
        if not (-1 <= lo <= hi <= 1):
            raise ConfigurationError(f"rho_range must be within [-1, 1], got {self.rho_range}")


class PayoffSpec:
    """Base class for terminal payoffs p(S_x, S_y).

    Payoffs must be nonnegative with at most linear growth in the prices.
    ``kink_prices`` lists the price levels where p(., s) or p(s, .) is
    non-differentiable (used for quadrature panel alignment), and
    ``has_diagonal_kink`` flags non-smoothness across S_x = S_y.
    """

    kink_prices: tuple = ()
    has_diagonal_kink: bool = False
    is_symmetric: bool = False  # p(a, b) == p(b, a) for all prices

    def __call__(self, sx, sy):  # pragma: no cover - abstract
        raise NotImplementedError


@dataclass(frozen=True)
class CallOnMax(PayoffSpec):
    """European call on the maximum of two assets: max(max(Sx, Sy) - K, 0)."""

    K: float = 40.0

    def __post_init__(self):
        if not self.K > 0:
            raise ConfigurationError("strike must be > 0")
        object.__setattr__(self, "kink_prices", (self.K,))
        object.__setattr__(self, "has_diagonal_kink", True)
        object.__setattr__(self, "is_symmetric", True)

    def __call__(self, sx, sy):
        return np.maximum(np.maximum(sx, sy) - self.K, 0.0)


@dataclass(frozen=True)
class Butterfly(PayoffSpec):
    """Butterfly on the maximum of two assets with strikes K1 < K2.

    p = max(m - K1, 0) - 2 max(m - (K1+K2)/2, 0) + max(m - K2, 0),
    with m = max(Sx, Sy).
    """

    K1: float = 34.0
    K2: float = 46.0

    def __post_init__(self):
        if not (0 < self.K1 < self.K2):
            raise ConfigurationError("butterfly requires 0 < K1 < K2")
        mid = 0.5 * (self.K1 + self.K2)
        object.__setattr__(self, "kink_prices", (self.K1, mid, self.K2))
        object.__setattr__(self, "has_diagonal_kink", True)
        object.__setattr__(self, "is_symmetric", True)

    def __call__(self, sx, sy):
        m = np.maximum(sx, sy)
        mid = 0.5 * (self.K1 + self.K2)
        return (np.maximum(m - self.K1, 0.0)
                - 2.0 * np.maximum(m - mid, 0.0)
                + np.maximum(m - self.K2, 0.0))


@dataclass(frozen=True)
class CustomPayoff(PayoffSpec):
    """User-supplied payoff callable on prices (vectorized).

    ``kink_prices`` must be declared for high-order quadrature alignment;
    payoffs without declared kinks are restricted to the trapezoid rule.
    """

    fn: object = None
    kink_prices: tuple = ()
    has_diagonal_kink: bool = False
    is_symmetric: bool = False

    def __call__(self, sx, sy):
        return np.asarray(self.fn(sx, sy))


def evaluate_payoff(payoff, x, y):
    """Payoff at log-prices (x, y): p(e^x, e^y).  Vectorized, nonnegative."""
    return payoff(np.exp(np.asarray(x, dtype=float)), np.exp(np.asarray(y, dtype=float)))


@dataclass(frozen=True, order=True)
class ControlPoint:
    """One admissible parameter triple (sigma_x, sigma_y, rho)."""

    sigma_x: float
    sigma_y: float
    rho: float

    @property
    def degenerate(self):
        """True when |rho| = 1 (the joint density collapses onto a line)."""
        return abs(self.rho) == 1.0

    def swapped(self):
        return ControlPoint(self.sigma_y, self.sigma_x, self.rho)


@dataclass(frozen=True)
class DiscreteControlSet:
    """Finite lattice on the boundary of the admissible control box.

    points are ordered lexicographically by (sigma_x, sigma_y, rho) so that
    argmax tie-breaking toward the smallest index is reproducible.
    """

    points: tuple
    Qx: int
    Qy: int

    @property
    def cardinality(self):
        return len(self.points)

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __getitem__(self, i):
        return self.points[i]

    def index(self, point):
        return self.points.index(point)


def build_control_set(spec, Qx, Qy):
    """Discretize the boundary control set with Qx / Qy intervals per sigma axis.

    The set is ({sx_min, sx_max} x {sy grid} union {sx grid} x {sy_min, sy_max})
    x {rho_min, rho_max}, deduplicated (corners appear once) and sorted.  For
    Qx = Qy = q with distinct rho endpoints the cardinality is 8 q.
    """
    if Qx < 1 or Qy < 1:
        raise ConfigurationError("Qx and Qy must be >= 1")
    sx_lo, sx_hi = spec.sigma_x_range
    sy_lo, sy_hi = spec.sigma_y_range
    rho_lo, rho_hi = spec.rho_range
    sx_grid = np.linspace(sx_lo, sx_hi, Qx + 1)
    sy_grid = np.linspace(sy_lo, sy_hi, Qy + 1)
    rhos = sorted({float(rho_lo), float(rho_hi)})
    points = set()
    for rho in rhos:
        for sy in sy_grid:
            points.add((float(sx_lo), float(sy), rho))
            points.add((float(sx_hi), float(sy), rho))
        for sx in sx_grid:
            points.add((float(sx), float(sy_lo), rho))
            points.add((float(sx), float(sy_hi), rho))
    ordered = tuple(ControlPoint(*p) for p in sorted(points))
    return DiscreteControlSet(points=ordered, Qx=Qx, Qy=Qy)
