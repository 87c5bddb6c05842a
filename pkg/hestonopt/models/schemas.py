"""
Pydantic models for parameters, configs and results
"""
from datetime import datetime
from typing import Annotated, Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class _Frozen(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, allow_inf_nan=False)


class HestonParams(_Frozen):
    """Asset drift and CIR variance coefficients, rates per year"""
    mu: float = Field(..., description="Asset drift rate")
    k: float = Field(..., description="Mean-reversion speed of the variance")
    theta: float = Field(..., description="Long-run variance level")
    sigma: float = Field(..., description="Volatility of volatility")
    rho: float = Field(..., description="Correlation of the two Brownian drivers")

    model_config = ConfigDict(
        extra="forbid",
        frozen=True,
        allow_inf_nan=False,
        json_schema_extra={
            "example": {"mu": 0.2, "k": 1.0, "theta": 0.16, "sigma": 0.4, "rho": 0.5}
        },
    )


class PowerUtility(_Frozen):
    """U(w) = w^gamma / gamma"""
    type: Literal["power"] = "power"
    gamma: float


class ExponentialUtility(_Frozen):
    """U(w) = 1 - exp(-c w) / c"""
    type: Literal["exponential"] = "exponential"
    c: float


Utility = Annotated[Union[PowerUtility, ExponentialUtility], Field(discriminator="type")]


class ModelDocument(_Frozen):
    """Flat parameter document: mu, k, theta, sigma, rho and a utility block"""
    mu: float
    k: float
    theta: float
    sigma: float
    rho: float
    utility: Utility

    @property
    def params(self) -> HestonParams:
        return HestonParams(mu=self.mu, k=self.k, theta=self.theta, sigma=self.sigma, rho=self.rho)


class DerivedConstants(_Frozen):
    """Constants of the closed-form solution"""
    delta: float
    big_c: float
    lam: float = Field(..., alias="lambda")
    eta: float

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    @property
    def kummer_a(self) -> float:
        """First Kummer parameter eta - lambda + 1/2"""
        return self.eta - self.lam + 0.5

    @property
    def kummer_b(self) -> float:
        """Second Kummer parameter 1 + 2 eta"""
        return 1.0 + 2.0 * self.eta

    @property
    def alpha(self) -> float:
        """eta + lambda + 1/2, the prefactor of f_v/f"""
        return self.eta + self.lam + 0.5


class EvaluationPoint(_Frozen):
    """State (w, x, v, t) on the horizon T"""
    w: float = Field(..., description="Wealth")
    x: float = Field(1.0, gt=0, description="Asset price")
    v: float = Field(..., gt=0, description="Instantaneous variance")
    t: float = Field(0.0, description="Current time")
    T: float = Field(..., description="Horizon")

    @model_validator(mode="after")
    def check_order(self):
        if self.t > self.T:
            raise ValueError(f"t <= T required, got t={self.t}, T={self.T}")
        return self

    @property
    def tau(self) -> float:
        return self.T - self.t


class PolicyOutput(BaseModel):
    """Value factor, Bellman value and the optimal control split"""
    f: float
    fv_over_f: float
    bellman: float
    control: float
    myopic_term: float
    hedging_term: float
    psi: Optional[float] = Field(None, description="Scaled state; None at the horizon")


class GridSpec(_Frozen):
    """Finite-difference grid; n_v and n_tau count intervals"""
    v_min: Optional[float] = Field(None, gt=0)
    v_max: Optional[float] = Field(None, gt=0)
    n_v: int = Field(512, ge=16)
    tau_max: float = Field(1.0, gt=0)
    n_tau: int = Field(512, ge=16)
    stretching: Literal["none", "geometric"] = "geometric"

    @model_validator(mode="after")
    def check_bounds(self):
        if self.v_min is not None and self.v_max is not None and self.v_max <= self.v_min:
            raise ValueError(f"v_max > v_min required, got v_min={self.v_min}, v_max={self.v_max}")
        return self


class ResidualReport(BaseModel):
    """Finite-difference residual of the closed form over a point set"""
    max_abs_residual: float
    l2_residual: float
    worst_v: float
    worst_tau: float
    h_v: float
    h_tau: float
    richardson_order: float


class McConfig(_Frozen):
    """Monte Carlo settings; the seed has no default on purpose"""
    n_paths: int = Field(..., ge=1000)
    n_steps: int = Field(512, ge=50, description="Time steps per unit of tau")
    seed: int = Field(..., ge=0, lt=2**64)
    scheme: Literal["full-truncation-euler", "exact-cir"] = "full-truncation-euler"
    antithetic: bool = False
    workers: int = Field(1, ge=1)

    @model_validator(mode="after")
    def check_pairs(self):
        if self.antithetic and self.n_paths % 2:
            raise ValueError(f"antithetic sampling needs an even n_paths, got {self.n_paths}")
        return self


class McEstimate(BaseModel):
    """Sample mean with its standard error"""
    mean: float
    std_error: float = Field(..., ge=0)
    n_effective: int


class BondCheckResult(BaseModel):
    """3/2-model bond estimate against the closed-form value factor"""
    v: float
    tau: float
    estimate: McEstimate
    closed_form: float
    z_score: float
    passed: bool
    b: float
    h: float
    m: float
    samples: Optional[Any] = Field(
        None, exclude=True, repr=False, description="Per-path discounts as a numpy array, kept on request"
    )


class UtilityCheckRow(BaseModel):
    scaling: float
    estimate: McEstimate
    difference: McEstimate = Field(..., description="Paired difference against scaling 1.0")
    flagged_paths: int
    samples: Optional[Any] = Field(
        None, exclude=True, repr=False, description="Per-path terminal utilities as a numpy array, kept on request"
    )


class UtilityCheckResult(BaseModel):
    """Expected terminal utility per hedging scaling"""
    point: EvaluationPoint
    bellman: float
    rows: List[UtilityCheckRow]


class CheckResult(BaseModel):
    name: str
    tolerance: float
    observed: float
    passed: bool
    detail: Dict[str, Any] = {}


class VerificationReport(BaseModel):
    which: Literal["pde", "mc", "all"]
    passed: bool
    checks: List[CheckResult]


class RunConfig(_Frozen):
    """CLI config document with sections model/utility/grid/mc/point"""
    model: HestonParams
    utility: Utility
    grid: GridSpec = GridSpec()
    mc: Optional[McConfig] = None
    point: Optional[EvaluationPoint] = None


class RunManifest(BaseModel):
    """Sidecar written next to every output file"""
    command: str
    resolved_config: Dict[str, Any]
    input_digests: Dict[str, str]
    tool_version: str
    timestamp: datetime = Field(default_factory=datetime.now)
    outputs: List[str] = []

    @field_validator("outputs")
    @classmethod
    def sort_outputs(cls, v):
        return sorted(v)


class EvaluationResult(BaseModel):
    """Output of the evaluate command"""
    point: EvaluationPoint
    policy: PolicyOutput
    constants: DerivedConstants
