"""Spatial/temporal grids and principled sizing of the truncated log-price domain.

The PDE is localized to a square log-price box centered at (ln X0, ln Y0).
Three nested tiers are used: the inner box where prices are reported, a
"dagger" box (twice the inner width) carrying the value surface that feeds the
convolution, and a "double-dagger" box (three times the inner width) indexing
all kernel offsets reachable from the dagger nodes.  All tiers share the same
uniform node spacing, so with N intervals on the inner x-range the tiers hold
N - 1 interior nodes, 2N + 1 dagger nodes and 3N - 1 distinct offsets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ConfigurationError

__all__ = [
    "GridSpec",
    "RefinementLevel",
    "DegenerateBoundError",
    "truncation_half_width",
    "build_grid",
]


class DegenerateBoundError(ConfigurationError):
    """Tail-bound domain sizing is unavailable when |rho_max| = 1."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform tensor grid over the three nested tiers.

    N, J   : interval counts on the inner x / y ranges (even, >= 4)
    M      : number of timesteps; dtau = T / M
    x_hat0 : grid center ln X0 (node n = 0), likewise y_hat0
    half_width_x/y : inner half-width w, so x_min/x_max = x_hat0 -/+ w
    """

    N: int
    J: int
    M: int
    dx: float
    dy: float
    dtau: float
    x_hat0: float
    y_hat0: float
    half_width_x: float
    half_width_y: float

    # --- tier bounds -----------------------------------------------------
    @property
    def x_min(self):
        return self.x_hat0 - self.half_width_x

    @property
    def x_max(self):
        return self.x_hat0 + self.half_width_x

    @property
    def y_min(self):
        return self.y_hat0 - self.half_width_y

    @property
    def y_max(self):
        return self.y_hat0 + self.half_width_y

    @property
    def x_dagger_min(self):
        return self.x_hat0 - 2.0 * self.half_width_x

    @property
    def x_dagger_max(self):
        return self.x_hat0 + 2.0 * self.half_width_x

    @property
    def y_dagger_min(self):
        return self.y_hat0 - 2.0 * self.half_width_y

    @property
    def y_dagger_max(self):
        return self.y_hat0 + 2.0 * self.half_width_y

    @property
    def x_ddagger_min(self):
        return self.x_hat0 - 3.0 * self.half_width_x

    @property
    def x_ddagger_max(self):
        return self.x_hat0 + 3.0 * self.half_width_x

    @property
    def y_ddagger_min(self):
        return self.y_hat0 - 3.0 * self.half_width_y

    @property
    def y_ddagger_max(self):
        return self.y_hat0 + 3.0 * self.half_width_y

    # --- node index sets --------------------------------------------------
    # Interior nodes: n in {-N/2+1, ..., N/2-1}   (N - 1 nodes)
    # Dagger nodes:   n in {-N, ..., N}           (2N + 1 nodes)
    # Offsets:        o in {-(3N/2-1), ..., 3N/2-1} (3N - 1 values)

    @property
    def interior_index_x(self):
        return np.arange(-(self.N // 2) + 1, self.N // 2)

    @property
    def interior_index_y(self):
        return np.arange(-(self.J // 2) + 1, self.J // 2)

    @property
    def dagger_index_x(self):
        return np.arange(-self.N, self.N + 1)

    @property
    def dagger_index_y(self):
        return np.arange(-self.J, self.J + 1)

    @property
    def x_dagger_nodes(self):
        return self.x_hat0 + self.dagger_index_x * self.dx

    @property
    def y_dagger_nodes(self):
        return self.y_hat0 + self.dagger_index_y * self.dy

    def interior_mask(self):
        """Boolean masks over the dagger axes selecting interior nodes."""
        mx = np.abs(self.dagger_index_x) <= self.N // 2 - 1
        my = np.abs(self.dagger_index_y) <= self.J // 2 - 1
        return mx, my

    @property
    def is_square_symmetric(self):
        """Same spacing on both axes with aligned centers (diagonal on nodes)."""
        if self.dx != self.dy:
            return False
        offset = (self.x_hat0 - self.y_hat0) / self.dx
        return abs(offset - round(offset)) < 1e-12


@dataclass(frozen=True)
class RefinementLevel:
    """Standard refinement ladder: everything driven by one mesh parameter.

    Level l: N = J = 2**(7+l), M = 50 * 2**l, Qx = Qy = 2**(l+1) - 1.
    """

    level: int

    @property
    def N(self):
        return 2 ** (7 + self.level)

    @property
    def J(self):
        return self.N

    @property
    def M(self):
        return 50 * 2 ** self.level

    @property
    def Qx(self):
        return 2 ** (self.level + 1) - 1

    @property
    def Qy(self):
        return self.Qx


def truncation_half_width(epsilon, spec, dtau):
    """Smallest half-width w (rounded up to 0.1) meeting the kernel tail bound.

    The single-step kernel mass outside the box is bounded by
    (1+rho_max)^(3/2) / (pi (1-rho_max)^(1/2)) * exp(-b^2/2) / b^2 evaluated at
    the scaled distance b to the box faces.  We solve the bound = epsilon for b
    by bisection on [1, 50], then take w large enough that b is reached on all
    four faces for every control: w >= b*kappa_z + |mu_z| for z in {x, y},
    with drift/scale taken at the largest admissible sigma (the worst case).
    """
    if not (0 < epsilon < 1):
        raise ConfigurationError(f"epsilon must be in (0, 1), got {epsilon}")
    rho_max = max(abs(spec.rho_range[0]), abs(spec.rho_range[1]))
    if rho_max >= 1.0:
        raise DegenerateBoundError(
            "tail bound diverges at |rho| = 1; size the domain via the "
            "Gaussian-approximation kernel instead")
    prefactor = (1.0 + rho_max) ** 1.5 / (math.pi * math.sqrt(1.0 - rho_max))

    def bound(b):
        return prefactor * math.exp(-0.5 * b * b) / (b * b)

    lo, hi = 1.0, 50.0
    if bound(lo) < epsilon:
        b = lo
    else:
        if bound(hi) >= epsilon:
            raise ConfigurationError("epsilon unreachable within b <= 50")
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if bound(mid) < epsilon:
                hi = mid
            else:
                lo = mid
            if hi - lo < 1e-12:
                break
        b = hi

    w = 0.0
    for sigma_range in (spec.sigma_x_range, spec.sigma_y_range):
        sigma = sigma_range[1]
        mu = (0.5 * sigma * sigma - spec.r) * dtau
        kappa = sigma * math.sqrt(dtau)
        w = max(w, b * kappa + abs(mu))
    return math.ceil(w * 10.0 - 1e-12) / 10.0


def build_grid(spec, half_width, N, J, M):
    """Construct the tiered grid centered at (ln X0, ln Y0)."""
    if N % 2 or J % 2 or N < 4 or J < 4:
        raise ConfigurationError(
            f"N and J must be even and >= 4 (tier arithmetic), got N={N}, J={J}")
    if M < 1:
        raise ConfigurationError(f"M must be >= 1, got {M}")
    if not half_width > 0:
        raise ConfigurationError(f"half_width must be > 0, got {half_width}")
    w = float(half_width)
    return GridSpec(
        N=int(N), J=int(J), M=int(M),
        dx=2.0 * w / N, dy=2.0 * w / J, dtau=spec.T / M,
        x_hat0=math.log(spec.X0), y_hat0=math.log(spec.Y0),
        half_width_x=w, half_width_y=w,
    )
