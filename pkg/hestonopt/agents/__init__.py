from .pde_verifier import PdeVerifierAgent
from .mc_verifier import McVerifierAgent
from .reporter import ReportAgent

__all__ = ["PdeVerifierAgent", "McVerifierAgent", "ReportAgent"]
