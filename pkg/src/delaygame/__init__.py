"""Two-stage global games with an option to delay."""

from .equilibrium import (EquilibriumSolution, ModelParams, delta_single_stage,
                          delta_slope_bound, delta_two_stage, dtau_dgamma,
                          second_stage_policy, solve_single_stage, solve_threshold,
                          solve_two_stage)
from .errors import (ConsistencyError, DelayGameError, DomainError, NumericalError,
                     SolverError, UnidentifiedFundamentalError)
from .gaussian import (DEFAULT_QUADRATURE, Posterior, QuadratureSpec, gaussian_expectation,
                       posterior_expectation, posterior_of_signal, std_cdf, std_cdf_inv,
                       std_pdf)
from .welfare import (RegionCell, WelfareReport, region_sweep, second_stage_value,
                      w_single_stage, w_two_stage, w_two_stage_dtau, welfare_argmax,
                      welfare_report)

__version__ = "0.1.0"

__all__ = [
    "ConsistencyError", "DEFAULT_QUADRATURE", "DelayGameError", "DomainError",
    "EquilibriumSolution", "ModelParams", "NumericalError", "Posterior", "QuadratureSpec",
    "RegionCell", "SolverError", "UnidentifiedFundamentalError", "WelfareReport",
    "delta_single_stage", "delta_slope_bound", "delta_two_stage", "dtau_dgamma",
    "gaussian_expectation", "posterior_expectation", "posterior_of_signal", "region_sweep",
    "second_stage_policy", "second_stage_value", "solve_single_stage", "solve_threshold",
    "solve_two_stage", "std_cdf", "std_cdf_inv", "std_pdf", "w_single_stage", "w_two_stage",
    "w_two_stage_dtau", "welfare_argmax", "welfare_report",
]
