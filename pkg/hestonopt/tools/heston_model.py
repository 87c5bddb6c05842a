"""
Parameter validation, derived solution constants and the scaled state Psi
"""
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import numpy as np

from hestonopt.core.config import settings
from hestonopt.core.errors import DomainError, ParameterValidationError
from hestonopt.models.schemas import (
    DerivedConstants,
    EvaluationPoint,
    ExponentialUtility,
    GridSpec,
    HestonParams,
    ModelDocument,
    PowerUtility,
)

logger = logging.getLogger(__name__)


def validate_params(params: HestonParams) -> List[str]:
    """Violations of the Heston coefficient invariants alone."""
    violations = []
    if params.k <= 0:
        violations.append(f"k > 0 required, got k={params.k}")
    if params.theta <= 0:
        violations.append(f"theta > 0 required, got theta={params.theta}")
    if params.sigma <= 0:
        violations.append(f"sigma > 0 required, got sigma={params.sigma}")
    if abs(params.rho) >= 1:
        violations.append(f"|rho| < 1 required, got rho={params.rho}")
    feller_lhs = 2.0 * params.k * params.theta
    feller_rhs = params.sigma ** 2
    if feller_lhs <= feller_rhs:
        violations.append(
            f"Feller condition 2*k*theta > sigma^2 violated: 2*k*theta={feller_lhs:g}, sigma^2={feller_rhs:g}"
        )
    return violations


def validate(params: HestonParams, utility: Union[PowerUtility, ExponentialUtility]) -> List[str]:
    """
    Collect every violated parameter invariant.

    Args:
        params: Heston coefficients
        utility: Power or exponential preferences

    Returns:
        List of violation messages, empty when the inputs are valid
    """
    violations = validate_params(params)

    if isinstance(utility, PowerUtility):
        if utility.gamma == 0:
            violations.append(
                "gamma < 0 required, got gamma=0 (logarithmic utility: use the myopic control mu/v)"
            )
        elif utility.gamma > 0:
            violations.append(f"gamma < 0 required, got gamma={utility.gamma}")
    elif isinstance(utility, ExponentialUtility):
        if utility.c <= 0:
            violations.append(f"c > 0 required, got c={utility.c}")
    else:
        violations.append(f"unknown utility {utility!r}")
    return violations


def _per_utility_terms(params: HestonParams, utility) -> Tuple[float, float, float]:
    """delta, C and the correlation part of lambda, free of division by rho."""
    mu, sigma, rho = params.mu, params.sigma, params.rho
    if isinstance(utility, PowerUtility):
        g = utility.gamma / (1.0 - utility.gamma)
        delta = 1.0 + rho ** 2 * g
        big_c = -g * 0.5 * mu ** 2 * delta
        lam_corr = -g * rho * mu / sigma
    else:
        delta = 1.0 - rho ** 2
        big_c = 0.5 * mu ** 2 * delta
        lam_corr = rho * mu / sigma
    return delta, big_c, lam_corr


def derive_constants(params: HestonParams, utility: Union[PowerUtility, ExponentialUtility]) -> DerivedConstants:
    """
    Compute delta, C, lambda and eta for the given utility family.

    Raises:
        ParameterValidationError: if validate() reports violations
        DomainError: if the constants fall outside the closed-form domain
    """
    violations = validate(params, utility)
    if violations:
        logger.error(f"Invalid parameters: {violations}")
        raise ParameterValidationError(violations)

    delta, big_c, lam_corr = _per_utility_terms(params, utility)
    lam = -params.k * params.theta / params.sigma ** 2 + lam_corr
    eta = math.sqrt((lam + 0.5) ** 2 + 2.0 * big_c / params.sigma ** 2)

    # Gamma arguments of the closed form must stay positive
    if not (eta - lam + 0.5 > 0 and eta + lam + 0.5 >= 0 and 0 < delta <= 1):
        logger.error(f"Derived constants out of range: delta={delta}, lambda={lam}, eta={eta}")
        raise DomainError(
            f"derived constants leave the closed-form domain: delta={delta:.6g}, lambda={lam:.6g}, eta={eta:.6g}"
        )

    constants = DerivedConstants(delta=delta, big_c=big_c, lam=lam, eta=eta)
    logger.debug(f"Derived constants: {constants}")
    return constants


def compute_psi(params: HestonParams, v: float, tau: float) -> float:
    """
    Psi = 2 k v / (sigma^2 (exp(k tau) - 1)).

    Args:
        params: Heston coefficients
        v: Instantaneous variance, positive
        tau: Time to horizon T - t, positive

    Returns:
        Scaled state Psi
    """
    if not v > 0:
        raise DomainError(f"v > 0 required, got v={v}")
    if not tau > 0:
        raise DomainError(f"tau > 0 required, got tau={tau}")
    return 2.0 * params.k * v / (params.sigma ** 2 * math.expm1(params.k * tau))


def validate_point(point: EvaluationPoint, utility) -> None:
    """Reject states outside the utility's domain."""
    if isinstance(utility, PowerUtility) and point.w <= 0:
        raise DomainError(f"power utility requires w > 0, got w={point.w}")
    if point.tau < 0:
        raise DomainError(f"t <= T required, got t={point.t}, T={point.T}")


def load_model_document(source: Union[str, Path, Dict[str, Any]]) -> ModelDocument:
    """
    Parse the flat parameter document (mu, k, theta, sigma, rho, utility).

    Unknown fields are rejected by the schema.
    """
    if isinstance(source, dict):
        data = source
    else:
        data = json.loads(Path(source).read_text())
    return ModelDocument.model_validate(data)


def default_v_bounds(params: HestonParams) -> Tuple[float, float]:
    """v_min = fraction of theta, v_max = theta plus a multiple of the stationary CIR spread."""
    v_min = settings.GRID_V_MIN_FRACTION * params.theta
    v_max = params.theta + settings.GRID_V_MAX_STDEVS * params.sigma * math.sqrt(params.theta / (2.0 * params.k))
    return v_min, v_max


def grid_axes(params: HestonParams, grid: GridSpec) -> Tuple[np.ndarray, np.ndarray]:
    """
    Node vectors (v, tau) of a GridSpec; n_v and n_tau count intervals.

    Geometric stretching clusters v nodes towards v_min.
    """
    v_min, v_max = default_v_bounds(params)
    if grid.v_min is not None:
        v_min = grid.v_min
    if grid.v_max is not None:
        v_max = grid.v_max
    if v_max <= v_min:
        raise DomainError(f"v_max > v_min required, got v_min={v_min}, v_max={v_max}")

    s = np.linspace(0.0, 1.0, grid.n_v + 1)
    if grid.stretching == "geometric":
        stretch = settings.GRID_STRETCH
        s = np.expm1(stretch * s) / math.expm1(stretch)
    v = v_min + (v_max - v_min) * s
    v[-1] = v_max
    tau = np.linspace(0.0, grid.tau_max, grid.n_tau + 1)
    return v, tau
