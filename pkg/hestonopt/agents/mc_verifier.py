"""
Monte Carlo Verifier Agent - Statistical checks of f and of the optimal control
"""
import logging
from typing import Any, Dict, List

from hestonopt.core.config import settings
from hestonopt.core.errors import DomainError
from hestonopt.models.schemas import CheckResult, EvaluationPoint, RunConfig
from hestonopt.tools.montecarlo import (
    bond_check,
    cir_mean_check,
    heston_mean_check,
    samples_frame,
    utility_check,
)

logger = logging.getLogger(__name__)

PERTURBED_SCALINGS = (0.0, 0.5, 2.0)


class McVerifierAgent:
    """Agent responsible for the simulation checks"""

    def __init__(self):
        logger.info("MC Verifier Agent initialized")

    def execute(self, state: Dict[str, Any]) -> Dict[str, Any]:
        """
        Run the Monte Carlo suite

        Args:
            state: Verification state with the run config

        Returns:
            State update with the checks and, when keep_samples is set,
            the per-path samples
        """
        config: RunConfig = state["config"]
        if config.mc is None:
            raise DomainError("verify mc needs an 'mc' section with an explicit seed")
        params, utility, cfg = config.model, config.utility, config.mc
        point = config.point or EvaluationPoint(w=1.0, v=params.theta, t=0.0, T=config.grid.tau_max)
        logger.info(f"MC Verifier Agent executing with {cfg.n_paths} paths, seed {cfg.seed}")

        n_sigma = settings.VERIFY_N_SIGMA
        checks: List[CheckResult] = [
            cir_mean_check(params, point.v, point.tau, cfg),
            heston_mean_check(params, point.x, point.v, point.tau, cfg),
        ]

        keep = bool(state.get("keep_samples"))
        bond = bond_check(params, utility, point.v, point.tau, cfg, keep_samples=keep)
        checks.append(
            CheckResult(
                name="bond_feynman_kac",
                tolerance=n_sigma,
                observed=abs(bond.z_score),
                passed=bond.passed,
                detail=bond.model_dump(),
            )
        )

        result = utility_check(point, utility, params, cfg, (1.0,) + PERTURBED_SCALINGS, keep_samples=keep)
        optimal = next(row for row in result.rows if row.scaling == 1.0)
        z = (optimal.estimate.mean - result.bellman) / optimal.estimate.std_error
        checks.append(
            CheckResult(
                name="utility_matches_bellman",
                tolerance=n_sigma,
                observed=abs(z),
                passed=abs(z) <= n_sigma,
                detail={"estimate": optimal.estimate.model_dump(), "bellman": result.bellman},
            )
        )
        for row in result.rows:
            if row.scaling == 1.0:
                continue
            se = row.difference.std_error
            z = row.difference.mean / se if se > 0 else 0.0
            checks.append(
                CheckResult(
                    name=f"not_dominated_by_scaling_{row.scaling:g}",
                    tolerance=n_sigma,
                    observed=z,
                    passed=z <= n_sigma,
                    detail={"difference": row.difference.model_dump(), "flagged_paths": row.flagged_paths},
                )
            )

        for check in checks:
            if not check.passed:
                logger.warning(f"Check {check.name} failed: {check.observed:.3g} vs {check.tolerance:.3g}")
        return {
            "checks": checks,
            "samples": samples_frame(bond, result) if keep else None,
            "messages": [f"MC suite: {sum(c.passed for c in checks)}/{len(checks)} checks passed"],
        }
