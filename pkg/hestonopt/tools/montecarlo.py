"""
Monte Carlo verification: CIR and Heston paths, the 3/2-model bond and
expected terminal utility under the closed-form control

Paths are split into fixed-size blocks. Each block draws from its own Philox
stream keyed by (seed, stream tag, block index), so estimates do not depend
on how blocks are scheduled across workers.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, TypeVar, Union

import numpy as np
import pandas as pd

from hestonopt.core.config import settings
from hestonopt.core.errors import (
    DegenerateCoefficientError,
    DomainError,
    ParameterValidationError,
    StepSizeError,
)
from hestonopt.models.schemas import (
    BondCheckResult,
    CheckResult,
    DerivedConstants,
    EvaluationPoint,
    ExponentialUtility,
    HestonParams,
    McConfig,
    McEstimate,
    PowerUtility,
    UtilityCheckResult,
    UtilityCheckRow,
)
from hestonopt.tools.heston_model import derive_constants, validate_params, validate_point
from hestonopt.tools.policy import bellman, hedging_ratio_table, value_factor

logger = logging.getLogger(__name__)

# Stream tags keep the purposes of the random draws apart
CIR_STREAM = 1
HESTON_STREAM = 2
BOND_STREAM = 3
UTILITY_STREAM = 4

T = TypeVar("T")


def block_rng(seed: int, tag: int, block: int) -> np.random.Generator:
    """Counter-based generator for one block of paths."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(tag, block))))


def block_sizes(n_paths: int) -> List[int]:
    size = settings.MC_BLOCK_SIZE
    full, rest = divmod(n_paths, size)
    return [size] * full + ([rest] if rest else [])


def n_time_steps(cfg: McConfig, tau: float) -> int:
    """cfg.n_steps counts steps per unit of tau."""
    return max(1, math.ceil(cfg.n_steps * tau))


def run_blocks(cfg: McConfig, tag: int, simulate: Callable[[np.random.Generator, int], T]) -> List[T]:
    """Run simulate(rng, n) on every block; results come back in block order."""
    sizes = block_sizes(cfg.n_paths)
    logger.info(f"Scheduling {len(sizes)} blocks of up to {settings.MC_BLOCK_SIZE} paths on {cfg.workers} workers")

    def one_block(index: int) -> T:
        return simulate(block_rng(cfg.seed, tag, index), sizes[index])

    if cfg.workers == 1:
        return [one_block(i) for i in range(len(sizes))]
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(one_block, range(len(sizes))))


def pair_average(samples: np.ndarray) -> np.ndarray:
    """Average antithetic partners; the second half of a block mirrors the first."""
    half = len(samples) // 2
    return 0.5 * (samples[:half] + samples[half:])


def pair_average_blocks(samples: np.ndarray, n_paths: int) -> np.ndarray:
    """pair_average applied block by block to a concatenated ensemble."""
    edges = np.cumsum([0] + block_sizes(n_paths))
    return np.concatenate([pair_average(samples[lo:hi]) for lo, hi in zip(edges[:-1], edges[1:])])


def estimate(samples: np.ndarray) -> McEstimate:
    """Mean and standard error with compensated summation."""
    samples = np.asarray(samples, dtype=float)
    n = len(samples)
    if n < 2:
        raise DomainError("an estimate needs at least two samples")
    mean = math.fsum(samples) / n
    var = math.fsum((samples - mean) ** 2) / (n - 1)
    return McEstimate(mean=mean, std_error=math.sqrt(var / n), n_effective=n)


def _normals(rng: np.random.Generator, n: int, antithetic: bool) -> np.ndarray:
    if antithetic:
        z = rng.standard_normal(n // 2)
        return np.concatenate([z, -z])
    return rng.standard_normal(n)


class CirStepper:
    """
    One time step of dV = k(theta - V)ds + sigma sqrt(V) dB.

    step() returns (V_next, xi, var_int) with xi the increment of
    int sqrt(V) dB and var_int the increment of int V ds.
    """

    def __init__(self, k: float, theta: float, sigma: float, dt: float, scheme: str, antithetic: bool):
        self.k = k
        self.theta = theta
        self.sigma = sigma
        self.dt = dt
        self.scheme = scheme
        self.antithetic = antithetic
        if scheme == "exact-cir":
            self.decay = math.exp(-k * dt)
            self.scale = sigma ** 2 * -math.expm1(-k * dt) / (4.0 * k)
            self.dof = 4.0 * k * theta / sigma ** 2
        elif scheme != "full-truncation-euler":
            raise DomainError(f"unknown scheme {scheme!r}")

    def step(self, rng: np.random.Generator, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        if self.scheme == "full-truncation-euler":
            v_pos = np.maximum(v, 0.0)
            var_int = v_pos * self.dt
            xi = np.sqrt(var_int) * _normals(rng, len(v), self.antithetic)
            v_next = v + self.k * (self.theta - v_pos) * self.dt + self.sigma * xi
            return v_next, xi, var_int

        # exact transition: scaled noncentral chi-square
        n = len(v)
        m = n // 2 if self.antithetic else n
        nonc = v[:m] * self.decay / self.scale
        draws = self.scale * rng.noncentral_chisquare(self.dof, nonc)
        v_next = np.concatenate([draws, draws]) if self.antithetic else draws
        var_int = 0.5 * (v + v_next) * self.dt
        xi = (v_next - v - self.k * self.theta * self.dt + self.k * var_int) / self.sigma
        return v_next, xi, var_int


@dataclass
class CirEnsemble:
    """Variance paths on times[0] = 0 ... times[-1] = tau; paths is None unless kept"""
    times: np.ndarray
    terminal: np.ndarray
    paths: Optional[np.ndarray] = None


@dataclass
class HestonEnsemble:
    times: np.ndarray
    x_terminal: np.ndarray
    v_terminal: np.ndarray
    x_paths: Optional[np.ndarray] = None
    v_paths: Optional[np.ndarray] = None


def _require_valid(params: HestonParams, v0: float, tau: float) -> None:
    violations = validate_params(params)
    if violations:
        raise ParameterValidationError(violations)
    if not v0 > 0:
        raise DomainError(f"v0 > 0 required, got {v0}")
    if not tau > 0:
        raise DomainError(f"tau > 0 required, got {tau}")


def simulate_cir(
    params: HestonParams, v0: float, tau: float, cfg: McConfig, keep_paths: bool = True
) -> CirEnsemble:
    """
    Simulate variance paths with the configured scheme.

    Full truncation uses max(V, 0) in drift and diffusion; reported paths
    are truncated at zero.
    """
    _require_valid(params, v0, tau)
    n_steps = n_time_steps(cfg, tau)
    dt = tau / n_steps
    stepper = CirStepper(params.k, params.theta, params.sigma, dt, cfg.scheme, cfg.antithetic)

    def simulate(rng: np.random.Generator, n: int):
        v = np.full(n, v0)
        path = np.empty((n, n_steps + 1)) if keep_paths else None
        if keep_paths:
            path[:, 0] = v0
        for j in range(1, n_steps + 1):
            v, _, _ = stepper.step(rng, v)
            if keep_paths:
                path[:, j] = np.maximum(v, 0.0)
        return np.maximum(v, 0.0), path

    blocks = run_blocks(cfg, CIR_STREAM, simulate)
    terminal = np.concatenate([b[0] for b in blocks])
    paths = np.concatenate([b[1] for b in blocks]) if keep_paths else None
    return CirEnsemble(times=np.linspace(0.0, tau, n_steps + 1), terminal=terminal, paths=paths)


def simulate_heston(
    params: HestonParams, x0: float, v0: float, tau: float, cfg: McConfig, keep_paths: bool = False
) -> HestonEnsemble:
    """
    Joint (X, V) paths; sqrt(V) dB1 = rho xi + sqrt(1 - rho^2) sqrt(var_int) Z, log-Euler for X.
    """
    _require_valid(params, v0, tau)
    if not x0 > 0:
        raise DomainError(f"x0 > 0 required, got {x0}")
    n_steps = n_time_steps(cfg, tau)
    dt = tau / n_steps
    stepper = CirStepper(params.k, params.theta, params.sigma, dt, cfg.scheme, cfg.antithetic)
    rho_perp = math.sqrt(1.0 - params.rho ** 2)

    def simulate(rng: np.random.Generator, n: int):
        v = np.full(n, v0)
        log_x = np.full(n, math.log(x0))
        x_path = np.empty((n, n_steps + 1)) if keep_paths else None
        v_path = np.empty((n, n_steps + 1)) if keep_paths else None
        if keep_paths:
            x_path[:, 0], v_path[:, 0] = x0, v0
        for j in range(1, n_steps + 1):
            v, xi, var_int = stepper.step(rng, v)
            z_perp = _normals(rng, n, cfg.antithetic)
            diffusion = params.rho * xi + rho_perp * np.sqrt(var_int) * z_perp
            log_x += params.mu * dt - 0.5 * var_int + diffusion
            if keep_paths:
                x_path[:, j], v_path[:, j] = np.exp(log_x), np.maximum(v, 0.0)
        return np.exp(log_x), np.maximum(v, 0.0), x_path, v_path

    blocks = run_blocks(cfg, HESTON_STREAM, simulate)
    return HestonEnsemble(
        times=np.linspace(0.0, tau, n_steps + 1),
        x_terminal=np.concatenate([b[0] for b in blocks]),
        v_terminal=np.concatenate([b[1] for b in blocks]),
        x_paths=np.concatenate([b[2] for b in blocks]) if keep_paths else None,
        v_paths=np.concatenate([b[3] for b in blocks]) if keep_paths else None,
    )


def _z_check(name: str, est: McEstimate, expected: float, **detail) -> CheckResult:
    z = (est.mean - expected) / est.std_error if est.std_error > 0 else (0.0 if est.mean == expected else math.inf)
    passed = abs(z) <= settings.VERIFY_N_SIGMA
    return CheckResult(
        name=name,
        tolerance=settings.VERIFY_N_SIGMA,
        observed=abs(z),
        passed=passed,
        detail={"mean": est.mean, "std_error": est.std_error, "expected": expected, **detail},
    )


def cir_mean_check(params: HestonParams, v0: float, tau: float, cfg: McConfig) -> CheckResult:
    """Sample mean of V_tau against theta + (v0 - theta) exp(-k tau), in standard errors."""
    ensemble = simulate_cir(params, v0, tau, cfg, keep_paths=False)
    samples = pair_average_blocks(ensemble.terminal, cfg.n_paths) if cfg.antithetic else ensemble.terminal
    expected = params.theta + (v0 - params.theta) * math.exp(-params.k * tau)
    return _z_check("cir_mean", estimate(samples), expected, scheme=cfg.scheme, v0=v0, tau=tau)


def heston_mean_check(params: HestonParams, x0: float, v0: float, tau: float, cfg: McConfig) -> CheckResult:
    """Sample mean of X_tau against x0 exp(mu tau), in standard errors."""
    ensemble = simulate_heston(params, x0, v0, tau, cfg)
    samples = pair_average_blocks(ensemble.x_terminal, cfg.n_paths) if cfg.antithetic else ensemble.x_terminal
    expected = x0 * math.exp(params.mu * tau)
    return _z_check("heston_mean", estimate(samples), expected, scheme=cfg.scheme, v0=v0, tau=tau)


def three_halves_coefficients(params: HestonParams, constants: DerivedConstants) -> Tuple[float, float, float]:
    """
    (b, h, m) of dr = h r (m - r) dt + b r^(3/2) dB with r = C / v.

    Raises:
        DegenerateCoefficientError: if C = 0, if 1 + lambda = 0, or if
            lambda >= -1/2 (y = v / C then reaches zero and the 3/2 rate explodes)
    """
    big_c, lam = constants.big_c, constants.lam
    if big_c <= 0:
        raise DegenerateCoefficientError(f"bond mapping needs C > 0, got C={big_c}")
    if 1.0 + lam == 0:
        raise DegenerateCoefficientError("bond mapping is singular at 1 + lambda = 0")
    # Feller condition of y = v / C: 2 k level > b^2 reduces to lambda < -1/2
    if lam >= -0.5:
        raise DegenerateCoefficientError(
            f"3/2 short rate needs lambda < -1/2 so that v / C stays positive, got lambda={lam:.6g}"
        )
    sigma2 = params.sigma ** 2
    b = params.sigma / math.sqrt(big_c)
    h = -(sigma2 / big_c) * (1.0 + lam)
    m = -params.k * big_c / (sigma2 * (1.0 + lam))
    return b, h, m


def bond_check(
    params: HestonParams,
    utility: Union[PowerUtility, ExponentialUtility],
    v: float,
    tau: float,
    cfg: McConfig,
    keep_samples: bool = False,
) -> BondCheckResult:
    """
    E exp(-int r ds) for the 3/2 short rate against f(v, tau).

    y = 1/r is a CIR process with speed h m, level (h + b^2)/(h m) and
    volatility b; the integral of r = 1/y uses the trapezoid rule. With
    keep_samples the per-path discounts (pair averages when antithetic) are
    attached to the result.
    """
    constants = derive_constants(params, utility)
    b, h, m = three_halves_coefficients(params, constants)
    if not v > 0 or not tau > 0:
        raise DomainError(f"v > 0 and tau > 0 required, got v={v}, tau={tau}")

    speed = h * m
    level = (h + b ** 2) / speed
    y0 = v / constants.big_c
    n_steps = n_time_steps(cfg, tau)
    dt = tau / n_steps
    stepper = CirStepper(speed, level, b, dt, cfg.scheme, cfg.antithetic)
    floor = settings.MC_VARIANCE_FLOOR

    def simulate(rng: np.random.Generator, n: int):
        y = np.full(n, y0)
        r_prev = np.full(n, 1.0 / y0)
        integral = np.zeros(n)
        hit = np.zeros(n, dtype=bool)
        for _ in range(n_steps):
            y, _, _ = stepper.step(rng, y)
            hit |= y <= floor
            r_next = 1.0 / np.maximum(y, floor)
            integral += 0.5 * (r_prev + r_next) * dt
            r_prev = r_next
        discount = np.where(hit, 0.0, np.exp(-integral))
        samples = pair_average(discount) if cfg.antithetic else discount
        return samples, int(hit.sum())

    blocks = run_blocks(cfg, BOND_STREAM, simulate)
    flagged = sum(block[1] for block in blocks)
    if flagged > settings.MC_MAX_FLAGGED_FRACTION * cfg.n_paths:
        logger.error(f"{flagged} of {cfg.n_paths} short-rate paths exploded")
        raise StepSizeError(
            "3/2 short rate exploded on too many paths",
            diagnostics={"flagged": flagged, "n_paths": cfg.n_paths, "dt": dt},
        )
    if flagged:
        logger.warning(f"{flagged} short-rate paths hit the floor and were discounted to zero")

    samples = np.concatenate([block[0] for block in blocks])
    est = estimate(samples)
    closed_form = value_factor(constants, params, v, tau)
    z = (est.mean - closed_form) / est.std_error if est.std_error > 0 else 0.0
    return BondCheckResult(
        v=v,
        tau=tau,
        estimate=est,
        closed_form=closed_form,
        z_score=z,
        passed=abs(z) <= settings.VERIFY_N_SIGMA,
        b=b,
        h=h,
        m=m,
        samples=samples if keep_samples else None,
    )


def _terminal_utility(utility, wealth: np.ndarray) -> np.ndarray:
    if isinstance(utility, PowerUtility):
        return wealth ** utility.gamma / utility.gamma
    return 1.0 - np.exp(-utility.c * wealth) / utility.c


def utility_check(
    point: EvaluationPoint,
    utility: Union[PowerUtility, ExponentialUtility],
    params: HestonParams,
    cfg: McConfig,
    control_scalings: Sequence[float] = (1.0, 0.0, 0.5, 2.0),
    keep_samples: bool = False,
) -> UtilityCheckResult:
    """
    Expected terminal utility when the hedging term of the optimal control is
    scaled by each factor; all scalings share the same random numbers.

    Power wealth is evolved in logs through the fraction alpha x / w, so it
    stays positive; paths reaching the wealth floor are frozen and flagged.
    Exponential wealth is evolved through the dollar exposure alpha x.
    Paths whose terminal utility is not finite are flagged as well.
    """
    validate_point(point, utility)
    constants = derive_constants(params, utility)
    if point.tau <= 0:
        raise DomainError("utility_check needs t < T")
    scalings = [float(s) for s in control_scalings]
    if 1.0 not in scalings:
        scalings = [1.0] + scalings
    base = scalings.index(1.0)

    table = hedging_ratio_table(constants)
    tau = point.tau
    n_steps = n_time_steps(cfg, tau)
    dt = tau / n_steps
    stepper = CirStepper(params.k, params.theta, params.sigma, dt, cfg.scheme, cfg.antithetic)
    rho_perp = math.sqrt(1.0 - params.rho ** 2)
    hedge_coef = params.rho * params.sigma / constants.delta
    scale_col = np.asarray(scalings)[:, None]
    is_power = isinstance(utility, PowerUtility)
    log_floor = math.log(settings.MC_WEALTH_FLOOR_FRACTION * point.w) if is_power else -math.inf
    variance_floor = settings.MC_VARIANCE_FLOOR
    sigma2 = params.sigma ** 2

    def simulate(rng: np.random.Generator, n: int):
        v = np.full(n, point.v)
        state = np.full((len(scalings), n), math.log(point.w) if is_power else point.w)
        flagged = np.zeros((len(scalings), n), dtype=bool)
        for j in range(n_steps):
            remaining = tau - j * dt
            v_ctrl = np.maximum(v, variance_floor)
            psi = 2.0 * params.k * v_ctrl / (sigma2 * math.expm1(params.k * remaining))
            myopic = params.mu / v_ctrl
            hedging = hedge_coef * table(psi) / v_ctrl
            exposure = myopic + scale_col * hedging

            v, xi, var_int = stepper.step(rng, v)
            z_perp = _normals(rng, n, cfg.antithetic)
            noise = params.rho * xi + rho_perp * np.sqrt(var_int) * z_perp

            if is_power:
                fraction = exposure / (1.0 - utility.gamma)
                step = fraction * params.mu * dt - 0.5 * fraction ** 2 * var_int + fraction * noise
                state = np.where(flagged, state, state + step)
                newly = ~np.isfinite(state) | (state <= log_floor)
                state = np.where(newly, log_floor, state)
                flagged |= newly
            else:
                dollars = exposure / utility.c
                state = state + dollars * (params.mu * dt + noise)
                flagged |= ~np.isfinite(state)

        wealth = np.exp(state) if is_power else state
        with np.errstate(over="ignore", invalid="ignore"):
            values = _terminal_utility(utility, wealth)
        overflowed = ~np.isfinite(values)
        flagged |= overflowed
        # flagged paths enter the estimate as zero; too many of them abort the check
        values = np.where(overflowed, 0.0, values)
        if cfg.antithetic:
            values = np.array([pair_average(row) for row in values])
        return values, flagged.sum(axis=1)

    blocks = run_blocks(cfg, UTILITY_STREAM, simulate)
    values = np.concatenate([block[0] for block in blocks], axis=1)
    flagged = np.sum([block[1] for block in blocks], axis=0)

    limit = settings.MC_MAX_FLAGGED_FRACTION * cfg.n_paths
    if np.any(flagged > limit):
        logger.error(f"Flagged wealth paths per scaling: {flagged.tolist()}")
        raise StepSizeError(
            "too many wealth paths reached the positivity floor or a non-finite utility",
            diagnostics={"flagged": flagged.tolist(), "scalings": scalings, "n_paths": cfg.n_paths},
        )

    rows = []
    for i, s in enumerate(scalings):
        diff = values[i] - values[base]
        diff_est = (
            McEstimate(mean=0.0, std_error=0.0, n_effective=values.shape[1])
            if not np.any(diff)
            else estimate(diff)
        )
        rows.append(
            UtilityCheckRow(
                scaling=s,
                estimate=estimate(values[i]),
                difference=diff_est,
                flagged_paths=int(flagged[i]),
                samples=values[i] if keep_samples else None,
            )
        )
        logger.info(f"Scaling {s}: E U = {rows[-1].estimate.mean:.6g} +/- {rows[-1].estimate.std_error:.2g}")

    return UtilityCheckResult(point=point, bellman=bellman(point, utility, constants, params), rows=rows)


SAMPLE_COLUMNS = ["quantity", "scaling", "path", "value"]


def samples_frame(
    bond: Optional[BondCheckResult] = None,
    utility: Optional[UtilityCheckResult] = None,
) -> pd.DataFrame:
    """
    Long-format table of the kept per-path samples: bond discounts under
    quantity "bond_discount", terminal utilities under "terminal_utility"
    with their hedging scaling.
    """
    parts = []
    if bond is not None and bond.samples is not None:
        parts.append(_sample_part("bond_discount", math.nan, bond.samples))
    if utility is not None:
        parts.extend(
            _sample_part("terminal_utility", row.scaling, row.samples)
            for row in utility.rows
            if row.samples is not None
        )
    if not parts:
        raise DomainError("no samples were kept; run the checks with keep_samples=True")
    return pd.concat(parts, ignore_index=True)[SAMPLE_COLUMNS]


def _sample_part(quantity: str, scaling: float, values: np.ndarray) -> pd.DataFrame:
    return pd.DataFrame(
        {"quantity": quantity, "scaling": scaling, "path": np.arange(len(values)), "value": values}
    )
