"""Validation references: closed-form two-asset call prices and a policy-following
Monte Carlo check.

The closed form prices a European call on the maximum of two lognormal assets
with constant volatilities and correlation; it exercises the full pricing
stack because at the optimizer's corner control the nonlinear problem reduces
to this constant-coefficient case.  The bivariate normal CDF follows Genz's
adaptive Gauss-Legendre algorithm (machine precision across all correlation
regimes, including |rho| = 1).  The Monte Carlo check simulates Euler paths
that look up their volatility/correlation from a recorded solver policy and
must reproduce the PDE price within its confidence interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.stats import norm

from .model import ConfigurationError, evaluate_payoff

__all__ = [
    "bivariate_normal_cdf",
    "black_scholes_call",
    "stulz_call_on_min",
    "stulz_call_on_max",
    "McConfig",
    "McResult",
    "interpolate_control",
    "mc_validate",
]

# Gauss-Legendre nodes/weights on (0, 1) halves, per correlation regime
_GL_W = {
    6: (0.1713244923791705, 0.3607615730481384, 0.4679139345726904),
    12: (0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
         0.2031674267230659, 0.2334925365383547, 0.2491470458134029),
    20: (0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
         0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
         0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
         0.1527533871307259),
}
_GL_X = {
    6: (0.9324695142031522, 0.6612093864662647, 0.2386191860831970),
    12: (0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
         0.5873179542866171, 0.3678314989981802, 0.1252334085114692),
    20: (0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
         0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
         0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
         0.07652652113349733),
}


def bivariate_normal_cdf(a, b, rho):
    """P(Z1 <= a, Z2 <= b) for standard normals with correlation rho.

    Genz's algorithm: for |rho| < 0.925 a Gauss-Legendre quadrature of the
    arcsine identity; for larger |rho| an expansion around the perfectly
    (anti)correlated limit.  |rho| = 1 is exact.
    """
    if not -1.0 <= rho <= 1.0:
        raise ConfigurationError(f"rho must be in [-1, 1], got {rho}")
    h, k, r = -a, -b, rho
    n = 6 if abs(r) < 0.3 else (12 if abs(r) < 0.75 else 20)
    w, x = _GL_W[n], _GL_X[n]
    bvn = 0.0
    if abs(r) < 0.925:
        hs = 0.5 * (h * h + k * k)
        asr = math.asin(r)
        for i in range(n // 2):
            for s in (-1.0, 1.0):
                sn = math.sin(asr * (s * x[i] + 1.0) / 2.0)
                bvn += w[i] * math.exp((sn * h * k - hs) / (1.0 - sn * sn))
        bvn = bvn * asr / (4.0 * math.pi) + norm.cdf(-h) * norm.cdf(-k)
    else:
        if r < 0.0:
            k = -k
        hk = h * k
        if abs(r) < 1.0:
            ass = (1.0 - r) * (1.0 + r)
            a_ = math.sqrt(ass)
            bs = (h - k) ** 2
            c = (4.0 - hk) / 8.0
            d = (12.0 - hk) / 16.0
            asr = -(bs / ass + hk) / 2.0
            if asr > -100.0:
                bvn = a_ * math.exp(asr) * (
                    1.0 - c * (bs - ass) * (1.0 - d * bs / 5.0) / 3.0
                    + c * d * ass * ass / 5.0)
            if -hk < 100.0:
                B = math.sqrt(bs)
                bvn -= (math.exp(-hk / 2.0) * math.sqrt(2.0 * math.pi)
                        * norm.cdf(-B / a_) * B
                        * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0))
            a_ /= 2.0
            for i in range(n // 2):
                for s in (-1.0, 1.0):
                    xs = (a_ * (s * x[i] + 1.0)) ** 2
                    rs = math.sqrt(1.0 - xs)
                    asr = -(bs / xs + hk) / 2.0
                    if asr > -100.0:
                        bvn += a_ * math.exp(asr) * (
                            math.exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs
                            - (1.0 + c * xs * (1.0 + d * xs))) * w[i]
            bvn = -bvn / (2.0 * math.pi)
        if r > 0.0:
            bvn += norm.cdf(-max(h, k))
        else:
            bvn = -bvn
            if k > h:
                bvn += norm.cdf(k) - norm.cdf(h)
    return float(min(max(bvn, 0.0), 1.0))


def black_scholes_call(S, K, r, T, sigma):
    """Vanilla European call under constant volatility."""
    st = sigma * math.sqrt(T)
    d1 = (math.log(S / K) + (r + 0.5 * sigma * sigma) * T) / st
    d2 = d1 - st
    return float(S * norm.cdf(d1) - K * math.exp(-r * T) * norm.cdf(d2))


def _call_on_max_quad(X, Y, K, r, T, sx, sy, rho):
    """1D reduction for |rho| = 1: both assets are driven by one normal Z."""
    st = math.sqrt(T)

    def integrand(z):
        fx = X * math.exp((r - 0.5 * sx * sx) * T + sx * st * z)
        fy = Y * math.exp((r - 0.5 * sy * sy) * T + rho * sy * st * z)
        return max(max(fx, fy) - K, 0.0) * norm.pdf(z)

    val, _ = quad(integrand, -14.0, 14.0, limit=400, epsabs=1e-12, epsrel=1e-12)
    return math.exp(-r * T) * val


def stulz_call_on_min(X, Y, K, r, T, sigma_x, sigma_y, rho):
    """Closed-form European call on min(X, Y) with strike K."""
    s2 = sigma_x ** 2 + sigma_y ** 2 - 2.0 * rho * sigma_x * sigma_y
    st = math.sqrt(T)
    if s2 <= 0.0:
        # perfectly co-moving assets with equal volatility: min is lognormal
        return black_scholes_call(min(X, Y), K, r, T, sigma_x)
    s = math.sqrt(s2)
    y1 = (math.log(X / K) + (r + 0.5 * sigma_x ** 2) * T) / (sigma_x * st)
    y2 = (math.log(Y / K) + (r + 0.5 * sigma_y ** 2) * T) / (sigma_y * st)
    d1 = (math.log(X / Y) + 0.5 * s2 * T) / (s * st)
    d2 = (math.log(Y / X) + 0.5 * s2 * T) / (s * st)
    r1 = (rho * sigma_y - sigma_x) / s
    r2 = (rho * sigma_x - sigma_y) / s
    return (X * bivariate_normal_cdf(y1, -d1, r1)
            + Y * bivariate_normal_cdf(y2, -d2, r2)
            - K * math.exp(-r * T) * bivariate_normal_cdf(y1 - sigma_x * st,
                                                          y2 - sigma_y * st, rho))


def stulz_call_on_max(X, Y, K, r, T, sigma_x, sigma_y, rho):
    """Closed-form European call on max(X, Y) with strike K.

    Uses max(a,b) = a + b - min(a,b); at |rho| = 1 the min-call piece falls
    back to a 1D quadrature over the single driving normal.
    """
    if not (X > 0 and Y > 0 and K > 0 and T > 0):
        raise ConfigurationError("prices, strike and horizon must be positive")
    if not -1.0 <= rho <= 1.0:
        raise ConfigurationError(f"rho must be in [-1, 1], got {rho}")
    if abs(rho) == 1.0:
        return _call_on_max_quad(X, Y, K, r, T, sigma_x, sigma_y, rho)
    return (black_scholes_call(X, K, r, T, sigma_x)
            + black_scholes_call(Y, K, r, T, sigma_y)
            - stulz_call_on_min(X, Y, K, r, T, sigma_x, sigma_y, rho))


@dataclass(frozen=True)
class McConfig:
    """Simulation settings for the policy-following validation."""

    n_paths: int = 100_000
    seed: int = 0
    confidence: float = 0.95

    def __post_init__(self):
        if self.n_paths < 2:
            raise ConfigurationError("need at least 2 paths")
        if not 0.0 < self.confidence < 1.0:
            raise ConfigurationError("confidence must be in (0, 1)")


@dataclass(frozen=True)
class McResult:
    """Sample statistics of the discounted payoff."""

    mean: float
    std_error: float
    ci_low: float
    ci_high: float
    n_paths: int
    seed: int

    def report(self):
        return {
            "mean": self.mean,
            "std_error": self.std_error,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "n_paths": self.n_paths,
            "seed": self.seed,
        }

    def contains(self, price):
        return self.ci_low <= price <= self.ci_high


def interpolate_control(policy_indices, control_table, grid, m, X, Y):
    """Bilinear interpolation of policy control components at prices (X, Y).

    policy_indices : (M, N-1, J-1) integer argmax record from the solver.
    control_table : (n_controls, 3) array of (sigma_x, sigma_y, rho).
    m : backward-step index in 1..M (time-to-maturity m*dtau).
    X, Y : spot prices (scalars or arrays); positions outside the interior
        node hull are clamped to its edge.

    Returns arrays (sigma_x, sigma_y, rho) interpolated componentwise from the
    four surrounding interior-node controls.
    """
    if not 1 <= m <= policy_indices.shape[0]:
        raise ConfigurationError(f"step index {m} outside 1..{policy_indices.shape[0]}")
    slice_idx = policy_indices[m - 1]
    comp = control_table[slice_idx]  # (N-1, J-1, 3)
    N, J = grid.N, grid.J
    # interior node (i=0) sits at x_hat0 + (-N/2+1)*dx
    px = (np.log(np.asarray(X, dtype=float)) - grid.x_hat0) / grid.dx + (N // 2 - 1)
    py = (np.log(np.asarray(Y, dtype=float)) - grid.y_hat0) / grid.dy + (J // 2 - 1)
    px = np.clip(px, 0.0, N - 2.0)
    py = np.clip(py, 0.0, J - 2.0)
    i0 = np.minimum(px.astype(int), N - 3)
    k0 = np.minimum(py.astype(int), J - 3)
    fx = (px - i0)[..., None]
    fy = (py - k0)[..., None]
    out = ((1 - fx) * (1 - fy) * comp[i0, k0]
           + fx * (1 - fy) * comp[i0 + 1, k0]
           + (1 - fx) * fy * comp[i0, k0 + 1]
           + fx * fy * comp[i0 + 1, k0 + 1])
    return out[..., 0], out[..., 1], out[..., 2]


def mc_validate(policy, spec, payoff, grid, mc=McConfig()):
    """Simulate Euler paths that follow the recorded policy and price the payoff.

    Forward step i (time i*dt -> (i+1)*dt, dt = T/M) reads the policy slice at
    time-to-maturity (M - i)*dtau and interpolates the control at the current
    prices.  Updates are Euler in price space:

        X <- X (1 + r dt + sx sqrt(dt) xi),
        Y <- Y (1 + r dt + sy sqrt(dt) (rho xi + sqrt(1-rho^2) eta)),

    with independent standard normals (xi, eta) and prices floored at a tiny
    positive value.  Returns sample mean, standard error and the requested
    normal-approximation confidence interval of the discounted payoff.
    """
    if hasattr(policy, "indices"):
        indices, table = policy.indices, np.array(
            [(c.sigma_x, c.sigma_y, c.rho) for c in policy.control_set])
    else:
        indices, table = policy
    M = grid.M
    if indices.shape[0] != M:
        raise ConfigurationError(
            f"policy has {indices.shape[0]} slices but the grid has M={M} steps")
    rng = np.random.default_rng(mc.seed)
    dt = spec.T / M
    sq = math.sqrt(dt)
    X = np.full(mc.n_paths, float(spec.X0))
    Y = np.full(mc.n_paths, float(spec.Y0))
    for i in range(M):
        sx, sy, rho = interpolate_control(indices, table, grid, M - i, X, Y)
        xi = rng.standard_normal(mc.n_paths)
        eta = rng.standard_normal(mc.n_paths)
        zy = rho * xi + np.sqrt(np.maximum(1.0 - rho * rho, 0.0)) * eta
        X = X * (1.0 + spec.r * dt + sx * sq * xi)
        Y = Y * (1.0 + spec.r * dt + sy * sq * zy)
        np.maximum(X, 1e-12, out=X)
        np.maximum(Y, 1e-12, out=Y)
    disc = math.exp(-spec.r * spec.T)
    samples = disc * np.asarray(payoff(X, Y), dtype=float)
    mean = float(np.mean(samples))
    se = float(np.std(samples, ddof=1) / math.sqrt(mc.n_paths))
    z = float(norm.ppf(0.5 + mc.confidence / 2.0))
    return McResult(mean=mean, std_error=se, ci_low=mean - z * se,
                    ci_high=mean + z * se, n_paths=mc.n_paths, seed=mc.seed)
