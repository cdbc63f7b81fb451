"""Two-asset option pricing under uncertain volatility and correlation.

Worst/best-case prices solve a 2D Hamilton-Jacobi-Bellman PDE; each backward
timestep convolves the value surface against closed-form transition kernels
(one per discretized control) via FFT and optimizes pointwise over controls.
"""

from .model import (Objective, ModelSpec, PayoffSpec, CallOnMax, Butterfly,
                    CustomPayoff, ControlPoint, DiscreteControlSet,
                    ConfigurationError, evaluate_payoff, build_control_set)
from .domain import (GridSpec, RefinementLevel, DegenerateBoundError,
                     truncation_half_width, build_grid)
from .kernel import (GreenParams, KernelSpectrum, psi, green_density,
                     green_density_degenerate, rho_hat, build_kernel,
                     weight_sum_diagnostic)
from .conv import (QuadratureWeights, AugmentedValueMatrix, AlignmentError,
                   trapezoid_weights, simpson_weights, augment, fft_convolve,
                   naive_convolve, extract_interior)
from .solver import (ValueSurface, ControlPolicy, SolveResult, NumericalFailure,
                     apply_initial, apply_boundary, step, solve, price_at,
                     export_policy, load_policy)
from .reference import (bivariate_normal_cdf, black_scholes_call,
                        stulz_call_on_min, stulz_call_on_max,
                        McConfig, McResult, interpolate_control, mc_validate)
from .estimator import UncertainVolatilityPricer

__version__ = "0.1.0"

__all__ = [
    "Objective", "ModelSpec", "PayoffSpec", "CallOnMax", "Butterfly",
    "CustomPayoff", "ControlPoint", "DiscreteControlSet", "ConfigurationError",
    "evaluate_payoff", "build_control_set",
    "GridSpec", "RefinementLevel", "DegenerateBoundError",
    "truncation_half_width", "build_grid",
    "GreenParams", "KernelSpectrum", "psi", "green_density",
    "green_density_degenerate", "rho_hat", "build_kernel",
    "weight_sum_diagnostic",
    "QuadratureWeights", "AugmentedValueMatrix", "AlignmentError",
    "trapezoid_weights", "simpson_weights", "augment", "fft_convolve",
    "naive_convolve", "extract_interior",
    "ValueSurface", "ControlPolicy", "SolveResult", "NumericalFailure",
    "apply_initial", "apply_boundary", "step", "solve", "price_at",
    "export_policy", "load_policy",
    "bivariate_normal_cdf", "black_scholes_call", "stulz_call_on_min",
    "stulz_call_on_max", "McConfig", "McResult", "interpolate_control",
    "mc_validate",
    "UncertainVolatilityPricer",
    "__version__",
]
