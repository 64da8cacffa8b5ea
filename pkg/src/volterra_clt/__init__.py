"""Numerical laboratory for small-noise stochastic Volterra systems.

Simulates the perturbed state, its zero-noise skeleton and the linearised
fluctuation process on a shared Brownian path, and estimates convergence
rates, moment bounds and kernel regularity exponents by Monte Carlo.
"""

__version__ = "0.1.0"

from .analysis import (HypothesisReport, MomentEstimate, RateReport,
                       check_hk1, check_hk2, check_model, fit_rate,
                       holder_exponent, lp_error_sup, moment_curve)
from .kernels import (KernelSpec, QuadratureConfig, constant_kernel,
                      fbm_covariance, fbm_kernel, gauss_2f1, gamma_fn,
                      kernel_eval, kernel_pow_integral, kernel_time_modulus,
                      riemann_liouville)
from .models import ModelSpec, builtin_model, directional_drift_derivative
from .paths import PathBundle, TimeGrid, make_path, refine_path
from .solver import (SchemeConfig, Trajectory, VolterraScheme,
                     diffusion_weights, drift_weights, normalized_error,
                     solve_deterministic, solve_limit, solve_perturbed)

__all__ = [
    "HypothesisReport", "MomentEstimate", "RateReport", "check_hk1",
    "check_hk2", "check_model", "fit_rate", "holder_exponent",
    "lp_error_sup", "moment_curve", "KernelSpec", "QuadratureConfig",
    "constant_kernel", "fbm_covariance", "fbm_kernel", "gauss_2f1",
    "gamma_fn", "kernel_eval", "kernel_pow_integral", "kernel_time_modulus",
    "riemann_liouville", "ModelSpec", "builtin_model",
    "directional_drift_derivative", "PathBundle", "TimeGrid", "make_path",
    "refine_path", "SchemeConfig", "Trajectory", "VolterraScheme",
    "diffusion_weights", "drift_weights", "normalized_error",
    "solve_deterministic", "solve_limit", "solve_perturbed", "__version__",
]
