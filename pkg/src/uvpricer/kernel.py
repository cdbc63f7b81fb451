"""Closed-form transition kernels per control and their Fourier spectra.

Holding a control (sigma_x, sigma_y, rho) fixed over one timestep, the value
surface advances by convolution against a discounted bivariate normal density
in log-price offsets: mean (mu_x, mu_y), scales (kappa_x, kappa_y) and
correlation rho, all scaled by exp(-r dtau).  For |rho| = 1 the density
collapses onto the line y = a + rho*b*x and is mollified by a narrow Gaussian
so it can be sampled on the common grid.

Kernels are sampled at every node offset reachable on the grid, rescaled by
dx*dy, wrapped into the circulant first-column layout, and transformed once;
the spectrum is reused for all timesteps of a solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .model import ConfigurationError

__all__ = [
    "GreenParams",
    "KernelSpectrum",
    "psi",
    "green_density",
    "green_density_degenerate",
    "rho_hat",
    "build_kernel",
    "weight_sum_diagnostic",
]


@dataclass(frozen=True)
class GreenParams:
    """Per-step drift/scale parameters of the transition density."""

    mu_x: float
    mu_y: float
    kappa_x: float
    kappa_y: float
    rho: float
    discount: float

    @classmethod
    def from_control(cls, control, r, dtau):
        sx, sy = control.sigma_x, control.sigma_y
        return cls(
            mu_x=(0.5 * sx * sx - r) * dtau,
            mu_y=(0.5 * sy * sy - r) * dtau,
            kappa_x=sx * math.sqrt(dtau),
            kappa_y=sy * math.sqrt(dtau),
            rho=control.rho,
            discount=math.exp(-r * dtau),
        )


@dataclass(frozen=True)
class KernelSpectrum:
    """Rescaled weight matrix in circulant first-column layout + its 2D DFT."""

    control: object
    first_column_matrix: np.ndarray  # (3N-1, 3J-1), real, >= 0
    spectrum: np.ndarray             # complex, same shape
    dx: float
    dy: float


def psi(eta, zeta, control, r):
    """Log of the kernel's Fourier transform per unit time (complex)."""
    sx, sy, rho = control.sigma_x, control.sigma_y, control.rho
    eta = np.asarray(eta, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    real = -0.5 * sx * sx * eta * eta - 0.5 * sy * sy * zeta * zeta \
        - rho * sx * sy * eta * zeta - r
    imag = (r - 0.5 * sx * sx) * eta + (r - 0.5 * sy * sy) * zeta
    return real + 1j * imag


def green_density(x, y, control, dtau, r):
    """Discounted transition density at log-price offsets (x, y), |rho| < 1."""
    if control.degenerate:
        raise ConfigurationError(
            "|rho| = 1 requires the degenerate kernel (green_density_degenerate)")
    p = GreenParams.from_control(control, r, dtau)
    return _gaussian2d(x, y, p.mu_x, p.mu_y, p.kappa_x, p.kappa_y, p.rho, p.discount)


def _gaussian2d(x, y, mu_x, mu_y, kappa_x, kappa_y, rho, discount):
    zx = (np.asarray(x, dtype=float) - mu_x) / kappa_x
    zy = (np.asarray(y, dtype=float) - mu_y) / kappa_y
    one_m = 1.0 - rho * rho
    norm = discount / (2.0 * math.pi * kappa_x * kappa_y * math.sqrt(one_m))
    q = (zx * zx - 2.0 * rho * zx * zy + zy * zy) / one_m
    return norm * np.exp(-0.5 * q)


def green_density_degenerate(x, y, control, dtau, r, rho_hat):
    """Mollified degenerate kernel for rho = +/-1.

    The exact kernel is a 1D Gaussian in x times a Dirac mass on the line
    y = a + rho*b*x with b = sigma_y/sigma_x and a = mu_y - rho*b*mu_x.  The
    Dirac factor is replaced by a Gaussian of width kappa_y*sqrt(1-rho_hat^2).
    """
    if not control.degenerate:
        raise ConfigurationError("green_density_degenerate requires rho = +/-1")
    if not (0.0 < rho_hat < 1.0):
        raise ConfigurationError(f"rho_hat must be in (0, 1), got {rho_hat}")
    p = GreenParams.from_control(control, r, dtau)
    rho = control.rho
    b = control.sigma_y / control.sigma_x
    a = p.mu_y - rho * b * p.mu_x
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    zx = (x - p.mu_x) / p.kappa_x
    gauss_x = np.exp(-0.5 * zx * zx) / (math.sqrt(2.0 * math.pi) * p.kappa_x)
    width = p.kappa_y * math.sqrt(1.0 - rho_hat * rho_hat)
    gamma = y - (a + rho * b * x)
    delta = np.exp(-0.5 * (gamma / width) ** 2) / (math.sqrt(2.0 * math.pi) * width)
    return p.discount * gauss_x * delta


def rho_hat(dy, kappa_y):
    """Correlation surrogate from the mollifier-width heuristic dy = 6*kappa_y*sqrt(1-rho_hat^2)."""
    if dy >= 6.0 * kappa_y:
        raise ConfigurationError(
            f"grid too coarse for the degenerate kernel: dy={dy} >= 6*kappa_y={6.0 * kappa_y}")
    return math.sqrt(1.0 - (dy / (6.0 * kappa_y)) ** 2)


def _effective_control_params(control, grid, r):
    """Kernel parameters actually sampled on the grid.

    For |rho| < 1 these are the exact parameters.  For |rho| = 1 the Dirac
    factor is widened to one grid cell and the conditional slope is shrunk so
    the marginal variance of the step stays exact; the result is the
    nondegenerate density evaluated at rho_eff = sign(rho)*sqrt(1-(dy/kappa_y)^2).
    Requires dy < kappa_y (one cell must fit under the collapsed density).
    """
    p = GreenParams.from_control(control, r, grid.dtau)
    if not control.degenerate:
        return p
    if grid.dy >= p.kappa_y:
        raise ConfigurationError(
            f"grid too coarse for the degenerate kernel: dy={grid.dy} >= kappa_y={p.kappa_y}")
    rho_eff = math.copysign(math.sqrt(1.0 - (grid.dy / p.kappa_y) ** 2), control.rho)
    return GreenParams(p.mu_x, p.mu_y, p.kappa_x, p.kappa_y, rho_eff, p.discount)


def _offsets(count, step):
    """Natural offset coordinates for a (3N-1)-point offset axis (count = 3N-1)."""
    half = (count + 1) // 2 - 1  # 3N/2 - 1
    return (np.arange(count) - half) * step


def weight_matrix_natural(control, grid, r):
    """Rescaled weights dx*dy*g at all node offsets, natural (sorted) layout.

    Row index a corresponds to x-offset (a - (3N/2 - 1))*dx, likewise columns.
    """
    p = _effective_control_params(control, grid, r)
    ox = _offsets(3 * grid.N - 1, grid.dx)
    oy = _offsets(3 * grid.J - 1, grid.dy)
    g = _gaussian2d(ox[:, None], oy[None, :],
                    p.mu_x, p.mu_y, p.kappa_x, p.kappa_y, p.rho, p.discount)
    return g * (grid.dx * grid.dy)


def natural_to_first_column(natural):
    """Reorder a natural-layout offset matrix into circulant first-column layout.

    The first-column layout stores offset o at index o mod (3N-1), i.e. rows
    [0..3N/2-1] hold offsets 0..3N/2-1 and the remaining rows hold the
    negative offsets wrapping from -(3N/2-1) up to -1; likewise columns.
    """
    rows, cols = natural.shape
    shift_r = (rows + 1) // 2 - 1
    shift_c = (cols + 1) // 2 - 1
    return np.roll(np.roll(natural, -shift_r, axis=0), -shift_c, axis=1)


def build_kernel(control, grid, r):
    """Assemble the rescaled weight matrix and its 2D Fourier transform."""
    natural = weight_matrix_natural(control, grid, r)
    first_col = natural_to_first_column(natural)
    spectrum = sfft.fft2(first_col)
    return KernelSpectrum(control=control, first_column_matrix=first_col,
                          spectrum=spectrum, dx=grid.dx, dy=grid.dy)


def weight_sum_diagnostic(kernel, r, dtau):
    """|sum of rescaled weights - exp(-r dtau)|, the discrete-mass defect.

    The exact kernel integrates to exp(-r dtau); the defect measures the
    quadrature error of the node sum and feeds the stability growth factor.
    """
    rows, cols = kernel.first_column_matrix.shape
    n_intervals = (rows + 1) // 3  # rows = 3N - 1
    j_intervals = (cols + 1) // 3
    ox = np.arange(rows)
    ox = np.where(ox <= rows // 2, ox, ox - rows)  # undo the modular wrap
    oy = np.arange(cols)
    oy = np.where(oy <= cols // 2, oy, oy - cols)
    inside = (np.abs(ox)[:, None] <= n_intervals) & (np.abs(oy)[None, :] <= j_intervals)
    total = float(np.sum(kernel.first_column_matrix[inside]))
    return abs(total - math.exp(-r * dtau))


def truncated_weight_block(control, grid, r, tail_scales=9.0):
    """Compact weight block for the fast convolution path.

    Returns (block, radius_x, radius_y) where block[radius_x + ox, radius_y + oy]
    holds the rescaled weight at offset (ox, oy).  Offsets beyond tail_scales
    standard deviations (plus drift) carry relative mass below ~1e-18 and are
    dropped; radii are capped at the full offset range 3N/2 - 1.
    """
    p = _effective_control_params(control, grid, r)
    rx = min(int(math.ceil((tail_scales * p.kappa_x + abs(p.mu_x)) / grid.dx)) + 1,
             3 * grid.N // 2 - 1)
    ry = min(int(math.ceil((tail_scales * p.kappa_y + abs(p.mu_y)) / grid.dy)) + 1,
             3 * grid.J // 2 - 1)
    ox = (np.arange(2 * rx + 1) - rx) * grid.dx
    oy = (np.arange(2 * ry + 1) - ry) * grid.dy
    g = _gaussian2d(ox[:, None], oy[None, :],
                    p.mu_x, p.mu_y, p.kappa_x, p.kappa_y, p.rho, p.discount)
    return g * (grid.dx * grid.dy), rx, ry
