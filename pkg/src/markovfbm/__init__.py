"""Markovian (OU-sum) approximation of Volterra fractional Brownian motion."""

from .analysis import (ErrorRecord, RateFit, error_sweep, fit_rate, gamma_fn, l2_error,
                       lower_incomplete_gamma, predicted_rate)
from .bergomi import (PricingConfig, PricingResult, call_via_parity, price, put_price,
                      simulate_terminal_prices)
from .errors import NotPSDError, NumericalFailure
from .quadrature import (GeometricGrid, ModelParams, QuadratureScheme, build_scheme,
                         gauss_rule_weighted, geometric_grid, kernel_eval, weighted_moments)
from .simulate import (IncrementModel, LiftPathBatch, exact_rl_fbm, increment_model,
                       joint_terminal_error_mc, lift_from_path, pivoted_cholesky, simulate_lift)

__version__ = "0.1.0"
