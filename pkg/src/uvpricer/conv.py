"""Quadrature weights and the circulant FFT convolution with a naive oracle.

One timestep of the scheme evaluates, for every interior node (n, j),

    u[n, j] = sum over dagger nodes (l, d) of phi[l, d] * W[n-l, j-d] * v[l, d]

where W are the rescaled kernel weights (density times dx*dy) and phi are
composite quadrature coefficients.  This is a block-Toeplitz product; it is
embedded in a circulant of size (3N-1) x (3J-1) (every reachable offset
appears exactly once) and computed as an FFT circular convolution.  A direct
compensated double sum serves as the correctness oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .model import ConfigurationError

__all__ = [
    "QuadratureWeights",
    "AugmentedValueMatrix",
    "AlignmentError",
    "trapezoid_weights",
    "simpson_weights",
    "augment",
    "fft_convolve",
    "naive_convolve",
    "extract_interior",
]


class AlignmentError(ConfigurationError):
    """A quadrature kink line does not pass through grid nodes."""


@dataclass(frozen=True)
class QuadratureWeights:
    """Per-node quadrature coefficients phi over the dagger grid."""

    phi: np.ndarray  # (2N+1, 2J+1)
    rule: str        # "trapezoid" or "simpson"
    kinks: tuple = ()


@dataclass(frozen=True)
class AugmentedValueMatrix:
    """phi-weighted values padded with zeros to the circulant shape."""

    matrix: np.ndarray  # (3N-1, 3J-1); leading (2N+1, 2J+1) block is phi*v


def trapezoid_weights(N, J):
    """Tensor-product composite trapezoid coefficients on the dagger grid."""
    if N < 2 or J < 2:
        raise ConfigurationError("trapezoid weights need N, J >= 2")
    wx = np.ones(2 * N + 1)
    wx[0] = wx[-1] = 0.5
    wy = np.ones(2 * J + 1)
    wy[0] = wy[-1] = 0.5
    return QuadratureWeights(phi=np.outer(wx, wy), rule="trapezoid")


def _segment_weights(length):
    """1D composite Simpson coefficients for one smooth segment of `length`
    intervals (unit spacing).

    Even lengths use plain composite Simpson.  Odd lengths >= 3 use Simpson on
    the leading part and a 3/8 panel on the trailing three intervals (both
    exact for cubics).  A single leftover interval falls back to the
    trapezoid; callers arrange segments so this only happens where the
    integrand mass is negligible or the segment is genuinely one cell wide.
    """
    w = np.zeros(length + 1)
    if length == 0:
        return w
    if length == 1:
        w[:] = (0.5, 0.5)
        return w
    if length % 2 == 0:
        w[0] += 1.0 / 3.0
        w[length] += 1.0 / 3.0
        w[1:length:2] += 4.0 / 3.0
        w[2:length:2] += 2.0 / 3.0
        return w
    w[:length - 2] += _segment_weights(length - 3)
    w[length - 3:] += (3.0 / 8.0, 9.0 / 8.0, 9.0 / 8.0, 3.0 / 8.0)
    return w


def _line_weights(n_nodes, breaks):
    """Composite Simpson coefficients along one axis, split at `breaks`."""
    w = np.zeros(n_nodes)
    cuts = sorted({0, n_nodes - 1, *(b for b in breaks if 0 < b < n_nodes - 1)})
    for a, b in zip(cuts[:-1], cuts[1:]):
        w[a:b + 1] += _segment_weights(b - a)
    return w


def _aligned_node(value, origin, step, n_nodes, what):
    """Map a coordinate to its node index, insisting on exact alignment."""
    pos = (value - origin) / step
    node = round(pos)
    if abs(pos - node) > 1e-9:
        raise AlignmentError(f"{what} at {value} is not grid-aligned (offset {pos - node:.3g} cells)")
    return int(node)


def simpson_weights(grid, kinks):
    """Composite Simpson coefficients split along declared kink lines.

    ``kinks`` is a list of ("x", log_level), ("y", log_level) and ("diag",)
    entries.  The grid must be square-symmetric (dx == dy with node-aligned
    centers) whenever a diagonal kink is declared, and every axis kink must
    pass through grid nodes.  Coefficients are assembled by iterated
    integration: the y-axis rule splits at y kinks; the x-axis rule for each
    row additionally splits where the diagonal crosses that row.  Within each
    smooth segment the rule is exact for cubics.
    """
    N, J = grid.N, grid.J
    x_breaks, y_breaks, diagonal = [], [], False
    for kink in kinks:
        kind = kink[0]
        if kind == "x":
            x_breaks.append(_aligned_node(kink[1], grid.x_dagger_min, grid.dx,
                                          2 * N + 1, "x kink"))
        elif kind == "y":
            y_breaks.append(_aligned_node(kink[1], grid.y_dagger_min, grid.dy,
                                          2 * J + 1, "y kink"))
        elif kind == "diag":
            diagonal = True
        else:
            raise ConfigurationError(f"unknown kink kind {kind!r}")
    if diagonal and not grid.is_square_symmetric:
        raise AlignmentError("diagonal kink needs dx == dy with node-aligned centers")

    wy = _line_weights(2 * J + 1, y_breaks)
    phi = np.empty((2 * N + 1, 2 * J + 1))
    if not diagonal:
        wx = _line_weights(2 * N + 1, x_breaks)
        phi[:] = np.outer(wx, wy)
    else:
        # x-node index crossed by the diagonal in row d
        center_shift = round((grid.y_hat0 - grid.x_hat0) / grid.dx) + (N - J)
        for d in range(2 * J + 1):
            cross = d + center_shift
            phi[:, d] = _line_weights(2 * N + 1, x_breaks + [cross]) * wy[d]
    kept = tuple(tuple(k) for k in kinks)
    return QuadratureWeights(phi=phi, rule="simpson", kinks=kept)


def augment(v, phi):
    """phi-weighted surface in the leading block of the circulant layout."""
    v = np.asarray(v, dtype=float)
    coeffs = phi.phi if isinstance(phi, QuadratureWeights) else np.asarray(phi)
    if v.shape != coeffs.shape:
        raise ConfigurationError(
            f"value/weight shape mismatch: {v.shape} vs {coeffs.shape}")
    rows, cols = v.shape          # (2N+1, 2J+1)
    N = (rows - 1) // 2
    J = (cols - 1) // 2
    out = np.zeros((3 * N - 1, 3 * J - 1))
    out[:rows, :cols] = coeffs * v
    return AugmentedValueMatrix(matrix=out)


def fft_convolve(kernel, values):
    """Circulant product: inverse DFT of the spectra product, full shape.

    Output row n + N, column j + J holds u[n, j]; only entries addressed by
    extract_interior are meaningful convolution results.
    """
    mat = values.matrix if isinstance(values, AugmentedValueMatrix) else np.asarray(values)
    if mat.shape != kernel.spectrum.shape:
        raise ValueError(f"shape mismatch: values {mat.shape} vs kernel {kernel.spectrum.shape}")
    full = sfft.ifft2(sfft.fft2(mat) * kernel.spectrum)
    scale = np.linalg.norm(full.real)
    residue = np.linalg.norm(full.imag)
    if scale > 0 and residue > 1e-10 * scale:
        raise FloatingPointError(f"imaginary residue {residue:.3e} exceeds tolerance")
    return full.real


def naive_convolve(weights_natural, phi, v):
    """Direct compensated double sum; the correctness oracle for the FFT path.

    weights_natural : (3N-1, 3J-1) rescaled kernel weights in natural offset
        order (row index a holds x-offset a - (3N/2 - 1)).
    phi, v : (2N+1, 2J+1) quadrature coefficients and surface values.

    Returns u over interior nodes, shape (N-1, J-1).
    """
    coeffs = phi.phi if isinstance(phi, QuadratureWeights) else np.asarray(phi)
    v = np.asarray(v, dtype=float)
    rows, cols = v.shape
    N = (rows - 1) // 2
    J = (cols - 1) // 2
    half_x = 3 * N // 2 - 1
    half_y = 3 * J // 2 - 1
    weighted = coeffs * v
    u = np.empty((N - 1, J - 1))
    for i, n in enumerate(range(-(N // 2) + 1, N // 2)):
        # x-offset of (n - l) for l in -N..N, as natural row indices
        gx = (n - np.arange(-N, N + 1)) + half_x
        for k, j in enumerate(range(-(J // 2) + 1, J // 2)):
            gy = (j - np.arange(-J, J + 1)) + half_y
            terms = weights_natural[np.ix_(gx, gy)] * weighted
            u[i, k] = math.fsum(terms.ravel())
    return u


def extract_interior(full):
    """Slice the interior-node block out of the full circulant product."""
    rows, cols = full.shape
    N = (rows + 1) // 3
    J = (cols + 1) // 3
    return full[N // 2 + 1:3 * N // 2, J // 2 + 1:3 * J // 2]
