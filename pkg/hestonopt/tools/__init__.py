from .specfun import log_gamma, log_kummer_m, log_kummer_scaled, log_whittaker_m, kummer_ratio_shifted
from .heston_model import validate, derive_constants, compute_psi, validate_point, load_model_document
from .policy import (
    value_factor,
    log_derivative_ratio,
    bellman,
    optimal_control,
    asymptotic_value_factor,
    asymptotic_log_derivative_ratio,
    small_volvol_control,
    small_volvol_bellman,
    hedging_ratio_table,
    evaluate_surface,
)

__all__ = [
    "log_gamma",
    "log_kummer_m",
    "log_kummer_scaled",
    "log_whittaker_m",
    "kummer_ratio_shifted",
    "validate",
    "derive_constants",
    "compute_psi",
    "validate_point",
    "load_model_document",
    "value_factor",
    "log_derivative_ratio",
    "bellman",
    "optimal_control",
    "asymptotic_value_factor",
    "asymptotic_log_derivative_ratio",
    "small_volvol_control",
    "small_volvol_bellman",
    "hedging_ratio_table",
    "evaluate_surface",
]
