"""
Closed-form value factor, Bellman functions and optimal controls
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Literal, Union

import numpy as np
import pandas as pd
from scipy.interpolate import CubicSpline

from hestonopt.core.config import settings
from hestonopt.core.errors import DomainError
from hestonopt.models.schemas import (
    DerivedConstants,
    EvaluationPoint,
    ExponentialUtility,
    GridSpec,
    HestonParams,
    PolicyOutput,
    PowerUtility,
)
from hestonopt.tools.heston_model import compute_psi, derive_constants, grid_axes, validate_point
from hestonopt.tools.specfun import kummer_ratio_shifted, log_gamma, log_kummer_scaled

logger = logging.getLogger(__name__)

Regime = Literal["small", "large"]
UtilityT = Union[PowerUtility, ExponentialUtility]

SURFACE_COLUMNS = [
    "v",
    "tau",
    "f",
    "fv_over_f",
    "control_myopic",
    "control_hedging",
    "control_total",
]


def value_factor(constants: DerivedConstants, params: HestonParams, v: float, tau: float) -> float:
    """
    f(v, t) = Gamma(a)/Gamma(b) exp(-Psi/2) Psi^lambda M_{lambda,eta}(Psi).

    Args:
        constants: Derived constants of the utility family
        params: Heston coefficients
        v: Variance, positive
        tau: Time to horizon, positive

    Returns:
        Value factor in (0, 1] for C >= 0
    """
    psi = compute_psi(params, v, tau)
    return value_factor_at_psi(constants, psi)


def value_factor_at_psi(constants: DerivedConstants, psi: float) -> float:
    """f as a function of Psi alone."""
    return math.exp(log_kummer_scaled(constants.kummer_a, constants.kummer_b, psi))


def _v_scaled_ratio(constants: DerivedConstants, psi: float) -> float:
    """v * f_v / f, a function of Psi alone."""
    alpha = constants.alpha
    if alpha == 0:
        return 0.0
    if psi > settings.RATIO_ASYMPTOTIC_PSI:
        return alpha * (constants.kummer_a - 1.0) / psi
    return alpha * kummer_ratio_shifted(constants.kummer_a, constants.kummer_b, psi)


def log_derivative_ratio(constants: DerivedConstants, v: float, psi: float) -> float:
    """
    f_v / f = ((eta + lambda + 1/2) / v) M_{1+lambda,eta}(Psi) / M_{lambda,eta}(Psi).

    Beyond Psi = RATIO_ASYMPTOTIC_PSI the large-Psi asymptote is returned.
    """
    if not v > 0:
        raise DomainError(f"v > 0 required, got v={v}")
    if not psi > 0:
        raise DomainError(f"psi > 0 required, got psi={psi}")
    return _v_scaled_ratio(constants, psi) / v


def _utility_wrap(utility: UtilityT, w: float, f: float, delta: float) -> float:
    f_pow = f ** (1.0 / delta)
    if isinstance(utility, PowerUtility):
        return w ** utility.gamma / utility.gamma * f_pow
    return 1.0 - math.exp(-utility.c * w) / utility.c * f_pow


def _prefactor(point: EvaluationPoint, utility: UtilityT) -> float:
    if isinstance(utility, PowerUtility):
        return point.w / (point.x * (1.0 - utility.gamma))
    return 1.0 / (utility.c * point.x)


def bellman(point: EvaluationPoint, utility: UtilityT, constants: DerivedConstants, params: HestonParams) -> float:
    """
    J_P = (w^gamma / gamma) f^(1/delta), J_E = 1 - (exp(-c w) / c) f^(1/delta).
    """
    validate_point(point, utility)
    f = 1.0 if point.tau == 0 else value_factor(constants, params, point.v, point.tau)
    return _utility_wrap(utility, point.w, f, constants.delta)


def optimal_control(
    point: EvaluationPoint, utility: UtilityT, constants: DerivedConstants, params: HestonParams
) -> PolicyOutput:
    """
    Optimal number of asset shares and its myopic/hedging split.

    Both terms scale as 1/v; the hedging term is assembled from v * f_v / f.
    At the horizon f = 1 and the hedging term vanishes.
    """
    validate_point(point, utility)
    prefactor = _prefactor(point, utility)
    if point.tau == 0:
        f, scaled_ratio, psi = 1.0, 0.0, None
    else:
        psi = compute_psi(params, point.v, point.tau)
        f = value_factor_at_psi(constants, psi)
        scaled_ratio = _v_scaled_ratio(constants, psi)

    myopic = prefactor * params.mu / point.v
    hedging = prefactor * params.rho * params.sigma / constants.delta * scaled_ratio / point.v
    return PolicyOutput(
        f=f,
        fv_over_f=scaled_ratio / point.v,
        bellman=_utility_wrap(utility, point.w, f, constants.delta),
        control=myopic + hedging,
        myopic_term=myopic,
        hedging_term=hedging,
        psi=psi,
    )


def _check_regime(psi: float, regime: Regime) -> None:
    if regime == "small":
        if not 0 < psi <= settings.SMALL_PSI_BAND:
            raise DomainError(f"small regime requires 0 < psi <= {settings.SMALL_PSI_BAND}, got {psi}")
    elif regime == "large":
        if not psi >= settings.LARGE_PSI_BAND:
            raise DomainError(f"large regime requires psi >= {settings.LARGE_PSI_BAND}, got {psi}")
    else:
        raise DomainError(f"unknown regime {regime!r}")


def asymptotic_value_factor(constants: DerivedConstants, psi: float, regime: Regime) -> float:
    """
    Leading-order f for small Psi, Gamma(a)/Gamma(b) Psi^(eta + lambda + 1/2); 1 for large Psi.
    """
    _check_regime(psi, regime)
    if regime == "large":
        return 1.0
    a, b = constants.kummer_a, constants.kummer_b
    return math.exp(log_gamma(a) - log_gamma(b) + constants.alpha * math.log(psi))


def asymptotic_log_derivative_ratio(constants: DerivedConstants, v: float, psi: float, regime: Regime) -> float:
    """
    (eta + lambda + 1/2)/v for small Psi, (2C/sigma^2)/(v Psi) for large Psi.
    """
    _check_regime(psi, regime)
    if not v > 0:
        raise DomainError(f"v > 0 required, got v={v}")
    if regime == "small":
        return constants.alpha / v
    # 2C/sigma^2 = (eta + lambda + 1/2)(eta - lambda - 1/2)
    return constants.alpha * (constants.kummer_a - 1.0) / (v * psi)


def small_volvol_control(point: EvaluationPoint, utility: UtilityT, params: HestonParams) -> float:
    """
    Control for sigma near zero: prefactor (mu/v + (rho sigma/delta) C/(k v^2) e^(k tau)).

    Uses the per-utility delta and C; sigma is not required to be small.
    """
    validate_point(point, utility)
    constants = derive_constants(params, utility)
    v = point.v
    correction = params.rho * params.sigma / constants.delta * constants.big_c / (params.k * v ** 2)
    correction *= math.exp(params.k * point.tau)
    return _prefactor(point, utility) * (params.mu / v + correction)


def small_volvol_bellman(point: EvaluationPoint, utility: UtilityT) -> float:
    """With f close to 1 the Bellman function is the utility itself."""
    validate_point(point, utility)
    if isinstance(utility, PowerUtility):
        return point.w ** utility.gamma / utility.gamma
    return 1.0 - math.exp(-utility.c * point.w) / utility.c


class HedgingRatioTable:
    """
    Cubic-spline table of v * f_v / f over ln Psi.

    Outside the tabulated band the small and large Psi asymptotes are used;
    Psi = inf (the horizon) maps to 0.
    """

    def __init__(self, constants: DerivedConstants):
        self.constants = constants
        self.psi_min = settings.RATIO_TABLE_PSI_MIN
        self.psi_max = settings.RATIO_TABLE_PSI_MAX
        decades = math.log10(self.psi_max / self.psi_min)
        n_nodes = int(round(decades * settings.RATIO_TABLE_NODES_PER_DECADE)) + 1
        log_psi = np.linspace(math.log(self.psi_min), math.log(self.psi_max), n_nodes)
        values = np.array([_v_scaled_ratio(constants, math.exp(x)) for x in log_psi])
        self._spline = CubicSpline(log_psi, values)
        logger.debug(f"Hedging ratio table built with {n_nodes} nodes")

    def __call__(self, psi: np.ndarray) -> np.ndarray:
        psi = np.asarray(psi, dtype=float)
        alpha = self.constants.alpha
        out = np.empty_like(psi)

        low = psi < self.psi_min
        high = psi > self.psi_max
        mid = ~(low | high)
        out[low] = alpha
        with np.errstate(divide="ignore"):
            out[high] = alpha * (self.constants.kummer_a - 1.0) / psi[high]
        out[mid] = self._spline(np.log(psi[mid]))
        return out


def hedging_ratio_table(constants: DerivedConstants) -> HedgingRatioTable:
    """Vectorised v * f_v / f as a function of Psi."""
    return HedgingRatioTable(constants)


def evaluate_surface(
    params: HestonParams,
    utility: UtilityT,
    constants: DerivedConstants,
    grid: GridSpec,
    w: float = 1.0,
    x: float = 1.0,
    workers: int = 1,
) -> pd.DataFrame:
    """
    Value factor and control decomposition on every (v, tau) node.

    Rows are ordered by tau, then v, independent of the worker count.
    """
    v_nodes, tau_nodes = grid_axes(params, grid)
    logger.info(f"Evaluating surface on {len(v_nodes)} x {len(tau_nodes)} nodes")

    def row_block(tau: float) -> list:
        rows = []
        for v in v_nodes:
            point = EvaluationPoint(w=w, x=x, v=float(v), t=0.0, T=tau)
            out = optimal_control(point, utility, constants, params)
            rows.append((float(v), tau, out.f, out.fv_over_f, out.myopic_term, out.hedging_term, out.control))
        return rows

    with ThreadPoolExecutor(max_workers=workers) as pool:
        blocks = list(pool.map(row_block, [float(t) for t in tau_nodes]))

    frame = pd.DataFrame([row for block in blocks for row in block], columns=SURFACE_COLUMNS)
    return frame
