"""
PDE verification of the closed form: finite-difference residual and a
Crank-Nicolson oracle for the linear problem satisfied by f

In tau = T - t the value factor solves
    f_tau = (sigma^2 v / 2) f_vv + (-lambda sigma^2 - k v) f_v - (C / v) f,   f(v, 0) = 1.
"""
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy.linalg import solve_banded

from hestonopt.core.config import settings
from hestonopt.core.errors import DomainError, NumericalInstabilityError
from hestonopt.models.schemas import DerivedConstants, GridSpec, HestonParams, ResidualReport
from hestonopt.tools.heston_model import grid_axes
from hestonopt.tools.policy import value_factor
from hestonopt.tools.reporting import write_csv

logger = logging.getLogger(__name__)

FEvaluator = Callable[[float, float], float]

COMPARISON_COLUMNS = ["v", "tau", "f_numeric", "f_closed_form", "rel_error"]


def _coefficients(params: HestonParams, constants: DerivedConstants, v):
    """Diffusion, drift and reaction coefficients at v."""
    sigma2 = params.sigma ** 2
    diffusion = 0.5 * sigma2 * v
    drift = -constants.lam * sigma2 - params.k * v
    reaction = constants.big_c / v
    return diffusion, drift, reaction


def closed_form_evaluator(params: HestonParams, constants: DerivedConstants) -> FEvaluator:
    """f(v, tau) from the closed form, usable as a residual target."""
    def f_eval(v: float, tau: float) -> float:
        return value_factor(constants, params, v, tau)
    return f_eval


def pde_residual(
    f_eval: FEvaluator,
    params: HestonParams,
    constants: DerivedConstants,
    point: Tuple[float, float],
    h_v: float,
    h_tau: float,
) -> float:
    """
    Centered-difference residual of (sigma^2 v/2) f_vv + drift f_v - (C/v) f + f_t.

    Args:
        f_eval: Evaluator f(v, tau)
        params: Heston coefficients
        constants: Derived constants
        point: (v, tau)
        h_v: Step in v
        h_tau: Step in tau

    Returns:
        Residual at the point; zero for an exact solution
    """
    v, tau = point
    if h_v <= 0 or h_tau <= 0:
        raise DomainError(f"steps must be positive, got h_v={h_v}, h_tau={h_tau}")
    if v - h_v <= 0:
        raise DomainError(f"stencil leaves v > 0: v={v}, h_v={h_v}")
    if tau - h_tau <= 0:
        raise DomainError(f"stencil leaves tau > 0: tau={tau}, h_tau={h_tau}")

    f0 = f_eval(v, tau)
    f_up = f_eval(v + h_v, tau)
    f_dn = f_eval(v - h_v, tau)
    f_vv = (f_up - 2.0 * f0 + f_dn) / h_v ** 2
    f_v = (f_up - f_dn) / (2.0 * h_v)
    # f_t = -f_tau
    f_t = -(f_eval(v, tau + h_tau) - f_eval(v, tau - h_tau)) / (2.0 * h_tau)

    diffusion, drift, reaction = _coefficients(params, constants, v)
    return diffusion * f_vv + drift * f_v - reaction * f0 + f_t


def residual_report(
    params: HestonParams,
    constants: DerivedConstants,
    points: Iterable[Tuple[float, float]],
    rel_step: Optional[float] = None,
    richardson_rel_step: Optional[float] = None,
    f_eval: Optional[FEvaluator] = None,
) -> ResidualReport:
    """
    Residual of the closed form over a point set plus the observed stencil order.

    Steps are relative: h_v = rel_step * v, h_tau = rel_step * tau. The order
    is measured at a coarser step where truncation dominates roundoff.
    """
    rel_step = rel_step or settings.VERIFY_RESIDUAL_REL_STEP
    richardson_rel_step = richardson_rel_step or settings.VERIFY_RICHARDSON_REL_STEP
    f_eval = f_eval or closed_form_evaluator(params, constants)

    residuals = []
    coarse, fine = 0.0, 0.0
    worst = (0.0, 0.0, 0.0, 0.0)
    worst_abs = -1.0
    for v, tau in points:
        h_v, h_tau = rel_step * v, rel_step * tau
        r = pde_residual(f_eval, params, constants, (v, tau), h_v, h_tau)
        residuals.append(r)
        if abs(r) > worst_abs:
            worst_abs = abs(r)
            worst = (v, tau, h_v, h_tau)

        hv, ht = richardson_rel_step * v, richardson_rel_step * tau
        coarse += abs(pde_residual(f_eval, params, constants, (v, tau), hv, ht))
        fine += abs(pde_residual(f_eval, params, constants, (v, tau), hv / 2, ht / 2))

    if not residuals:
        raise DomainError("residual_report needs at least one point")
    residuals = np.asarray(residuals)
    order = math.log2(coarse / fine) if fine > 0 and coarse > 0 else float("nan")

    report = ResidualReport(
        max_abs_residual=float(np.max(np.abs(residuals))),
        l2_residual=float(np.sqrt(np.mean(residuals ** 2))),
        worst_v=worst[0],
        worst_tau=worst[1],
        h_v=worst[2],
        h_tau=worst[3],
        richardson_order=order,
    )
    logger.info(f"Residual over {len(residuals)} points: max {report.max_abs_residual:.3e}, order {order:.2f}")
    return report


def _stencil_weights(x0: float, nodes: np.ndarray, derivative: int) -> np.ndarray:
    """Finite-difference weights of the given derivative at x0 from arbitrary nodes."""
    m = len(nodes)
    dx = nodes - x0
    vander = np.array([dx ** p / math.factorial(p) for p in range(m)])
    rhs = np.zeros(m)
    rhs[derivative] = 1.0
    return np.linalg.solve(vander, rhs)


def _derivative_matrices(v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    First and second derivative matrices on a non-uniform grid.

    Interior rows are 3-point centered; the two boundary rows use 4-point
    one-sided stencils. Rows sum to zero exactly.
    """
    n = len(v)
    d1 = np.zeros((n, n))
    d2 = np.zeros((n, n))
    h_l = v[1:-1] - v[:-2]
    h_r = v[2:] - v[1:-1]
    rows = np.arange(1, n - 1)
    d1[rows, rows - 1] = -h_r / (h_l * (h_l + h_r))
    d1[rows, rows + 1] = h_l / (h_r * (h_l + h_r))
    d2[rows, rows - 1] = 2.0 / (h_l * (h_l + h_r))
    d2[rows, rows + 1] = 2.0 / (h_r * (h_l + h_r))

    for row, cols in ((0, np.arange(0, 4)), (n - 1, np.arange(n - 4, n))):
        d1[row, cols] = _stencil_weights(v[row], v[cols], 1)
        d2[row, cols] = _stencil_weights(v[row], v[cols], 2)

    for d in (d1, d2):
        np.fill_diagonal(d, 0.0)
        np.fill_diagonal(d, -d.sum(axis=1))
    return d1, d2


def _to_banded(a: np.ndarray, lower: int = 3, upper: int = 3) -> np.ndarray:
    n = a.shape[0]
    ab = np.zeros((lower + upper + 1, n))
    for d in range(-lower, upper + 1):
        diag = np.diagonal(a, d)
        if d >= 0:
            ab[upper - d, d:] = diag
        else:
            ab[upper - d, : n + d] = diag
    return ab


@dataclass
class PdeSurface:
    """Numerical f on the (tau, v) grid; values[j, i] = f(v[i], tau[j])"""
    v: np.ndarray
    tau: np.ndarray
    values: np.ndarray


def operator_matrix(params: HestonParams, constants: DerivedConstants, v: np.ndarray) -> np.ndarray:
    """Spatial operator L with f_tau = L f."""
    d1, d2 = _derivative_matrices(v)
    diffusion, drift, reaction = _coefficients(params, constants, v)
    return diffusion[:, None] * d2 + drift[:, None] * d1 - np.diag(reaction)


def cn_solve(params: HestonParams, constants: DerivedConstants, grid: GridSpec) -> PdeSurface:
    """
    March f(v, 0) = 1 forward in tau with Crank-Nicolson.

    The first step is replaced by implicit half steps (Rannacher start).
    The PDE is applied at both v boundaries with one-sided stencils.

    Raises:
        NumericalInstabilityError: if the march produces non-finite values
    """
    v, tau = grid_axes(params, grid)
    if v[0] <= 0:
        raise DomainError(f"v_min > 0 required, got {v[0]}")
    n_v = len(v)
    dt = tau[1] - tau[0]
    logger.info(f"Crank-Nicolson solve: {n_v} v nodes, {len(tau) - 1} steps, dt={dt:.3e}")

    op = operator_matrix(params, constants, v)
    identity = np.eye(n_v)
    half_steps = max(settings.RANNACHER_HALF_STEPS, 1)

    # implicit Euler sub-steps cover the first interval
    dt_implicit = dt / half_steps
    lhs_implicit = _to_banded(identity - dt_implicit * op)
    lhs_cn = _to_banded(identity - 0.5 * dt * op)
    rhs_cn = identity + 0.5 * dt * op

    values = np.empty((len(tau), n_v))
    values[0] = 1.0
    current = values[0].copy()
    for j in range(1, len(tau)):
        if j == 1:
            for _ in range(half_steps):
                current = solve_banded((3, 3), lhs_implicit, current)
        else:
            current = solve_banded((3, 3), lhs_cn, rhs_cn @ current)
        if not np.all(np.isfinite(current)):
            bad = int(np.flatnonzero(~np.isfinite(current))[0])
            logger.error(f"Non-finite value at step {j}, v={v[bad]}")
            raise NumericalInstabilityError(
                f"Crank-Nicolson march produced non-finite values at step {j}",
                diagnostics={"step": j, "tau": float(tau[j]), "v": float(v[bad]), "dt": float(dt)},
            )
        values[j] = current
    return PdeSurface(v=v, tau=tau, values=values)


def _window_mask(surface: PdeSurface, params: HestonParams) -> Tuple[np.ndarray, np.ndarray]:
    lo, hi = settings.VERIFY_CN_WINDOW_V_BAND
    v_mask = (surface.v >= lo * params.theta) & (surface.v <= hi * params.theta)
    tau_mask = surface.tau >= settings.VERIFY_CN_WINDOW_TAU_FRACTION * surface.tau[-1]
    return v_mask, tau_mask


def compare_surface(
    surface: PdeSurface,
    params: HestonParams,
    constants: DerivedConstants,
    window: bool = True,
) -> pd.DataFrame:
    """
    Numerical against closed-form f on every node, or on the comparison
    window (by default v in [theta/2, 2 theta], tau in [tau_max/4, tau_max]).

    The window keeps clear of v_min, where f ~ v^alpha is not smooth and the
    one-sided stencil has no boundary data to lean on, and of the first
    steps, where the Rannacher start damps the jump at tau = 0.
    """
    if window:
        v_mask, tau_mask = _window_mask(surface, params)
    else:
        v_mask = np.ones_like(surface.v, dtype=bool)
        tau_mask = np.ones_like(surface.tau, dtype=bool)

    rows = []
    for j in np.flatnonzero(tau_mask):
        t = float(surface.tau[j])
        for i in np.flatnonzero(v_mask):
            vi = float(surface.v[i])
            exact = 1.0 if t == 0 else value_factor(constants, params, vi, t)
            numeric = float(surface.values[j, i])
            rows.append((vi, t, numeric, exact, abs(numeric - exact) / exact))
    return pd.DataFrame(rows, columns=COMPARISON_COLUMNS)


def interior_error(
    surface: PdeSurface,
    params: HestonParams,
    constants: DerivedConstants,
    n_levels: Optional[int] = None,
) -> Dict[str, float]:
    """
    Largest relative error over every interior v node (boundaries excluded)
    at n_levels evenly spaced tau levels with tau > 0.

    Returns:
        max_rel_error, worst_v, worst_tau and the number of tau levels used
    """
    n_levels = n_levels or settings.VERIFY_CN_INTERIOR_TAU_LEVELS
    levels = np.unique(np.linspace(1, len(surface.tau) - 1, n_levels).round().astype(int))
    worst, worst_v, worst_tau = 0.0, math.nan, math.nan
    for j in levels:
        t = float(surface.tau[j])
        for i in range(1, len(surface.v) - 1):
            vi = float(surface.v[i])
            exact = value_factor(constants, params, vi, t)
            err = abs(float(surface.values[j, i]) - exact) / exact
            if err > worst:
                worst, worst_v, worst_tau = err, vi, t
    logger.info(f"Interior CN error {worst:.3e} at v={worst_v:.3e}, tau={worst_tau:.3g}")
    return {"max_rel_error": worst, "worst_v": worst_v, "worst_tau": worst_tau, "tau_levels": len(levels)}


def convergence_order(
    params: HestonParams,
    constants: DerivedConstants,
    grid: GridSpec,
) -> Tuple[float, List[float]]:
    """
    Observed order of cn_solve from the grid and its simultaneous refinement.

    Errors against the closed form are taken on the window nodes of the
    coarse grid, which the refined grid shares.

    Returns:
        (order, [coarse error, fine error])
    """
    fine_grid = grid.model_copy(update={"n_v": 2 * grid.n_v, "n_tau": 2 * grid.n_tau})
    errors = []
    for spec, stride in ((grid, 1), (fine_grid, 2)):
        surface = cn_solve(params, constants, spec)
        coarse_view = PdeSurface(
            v=surface.v[::stride], tau=surface.tau[::stride], values=surface.values[::stride, ::stride]
        )
        frame = compare_surface(coarse_view, params, constants)
        errors.append(float((frame["f_numeric"] - frame["f_closed_form"]).abs().max()))
    order = math.log2(errors[0] / errors[1]) if errors[1] > 0 else float("inf")
    logger.info(f"Observed grid order {order:.2f} (errors {errors[0]:.3e}, {errors[1]:.3e})")
    return order, errors


def export_surface_csv(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    """Write a comparison frame with 17 significant digits."""
    return write_csv(frame[COMPARISON_COLUMNS], path)
