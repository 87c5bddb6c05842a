from .schemas import (
    HestonParams,
    PowerUtility,
    ExponentialUtility,
    Utility,
    ModelDocument,
    DerivedConstants,
    EvaluationPoint,
    PolicyOutput,
    GridSpec,
    ResidualReport,
    McConfig,
    McEstimate,
    BondCheckResult,
    UtilityCheckRow,
    UtilityCheckResult,
    CheckResult,
    VerificationReport,
    RunConfig,
    RunManifest,
    EvaluationResult,
)

__all__ = [
    "HestonParams",
    "PowerUtility",
    "ExponentialUtility",
    "Utility",
    "ModelDocument",
    "DerivedConstants",
    "EvaluationPoint",
    "PolicyOutput",
    "GridSpec",
    "ResidualReport",
    "McConfig",
    "McEstimate",
    "BondCheckResult",
    "UtilityCheckRow",
    "UtilityCheckResult",
    "CheckResult",
    "VerificationReport",
    "RunConfig",
    "RunManifest",
    "EvaluationResult",
]
