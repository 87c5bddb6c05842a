"""
Report Agent - Assembles the verification report
"""
import logging
from typing import Any, Dict

from hestonopt.models.schemas import VerificationReport

logger = logging.getLogger(__name__)


class ReportAgent:
    """Agent responsible for the final pass/fail report"""

    def __init__(self):
        logger.info("Report Agent initialized")

    def execute(self, state: Dict[str, Any]) -> Dict[str, Any]:
        checks = list(state.get("checks", []))
        report = VerificationReport(
            which=state["which"],
            passed=bool(checks) and all(c.passed for c in checks),
            checks=checks,
        )
        failed = [c.name for c in checks if not c.passed]
        if failed:
            logger.warning(f"Verification failed: {failed}")
        else:
            logger.info(f"All {len(checks)} checks passed")
        return {"report": report, "messages": [f"Report: {'pass' if report.passed else 'fail'}"]}
