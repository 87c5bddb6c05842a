"""
LangGraph workflow orchestration for the verification suites
"""
import logging
from operator import add
from typing import Annotated, Any, Dict, List, Literal, Optional, TypedDict

from langgraph.graph import END, StateGraph

from hestonopt.agents import McVerifierAgent, PdeVerifierAgent, ReportAgent
from hestonopt.models.schemas import CheckResult, RunConfig, VerificationReport

logger = logging.getLogger(__name__)


class VerificationState(TypedDict, total=False):
    """State shared across all agents"""
    which: Literal["pde", "mc", "all"]
    config: RunConfig
    checks: Annotated[List[CheckResult], add]
    messages: Annotated[List[str], add]
    surface: Any
    keep_samples: bool
    samples: Any
    report: Optional[VerificationReport]


class VerificationWorkflow:
    """LangGraph workflow: pde and/or mc suites, then the report"""

    def __init__(self):
        self.pde_agent = PdeVerifierAgent()
        self.mc_agent = McVerifierAgent()
        self.report_agent = ReportAgent()
        self.app = self._build_workflow()
        logger.info("Workflow initialized")

    def _build_workflow(self):
        """Build the LangGraph workflow"""
        workflow = StateGraph(VerificationState)

        workflow.add_node("pde", self._pde_node)
        workflow.add_node("mc", self._mc_node)
        workflow.add_node("report", self._report_node)

        workflow.set_conditional_entry_point(self._route_start, {"pde": "pde", "mc": "mc"})
        workflow.add_conditional_edges("pde", self._route_after_pde, {"mc": "mc", "report": "report"})
        workflow.add_edge("mc", "report")
        workflow.add_edge("report", END)

        app = workflow.compile()
        logger.info("Workflow compiled successfully")
        return app

    @staticmethod
    def _route_start(state: VerificationState) -> str:
        return "mc" if state["which"] == "mc" else "pde"

    @staticmethod
    def _route_after_pde(state: VerificationState) -> str:
        return "mc" if state["which"] == "all" else "report"

    def _pde_node(self, state: VerificationState) -> Dict[str, Any]:
        logger.info("Executing pde node")
        return self.pde_agent.execute(state)

    def _mc_node(self, state: VerificationState) -> Dict[str, Any]:
        logger.info("Executing mc node")
        return self.mc_agent.execute(state)

    def _report_node(self, state: VerificationState) -> Dict[str, Any]:
        logger.info("Executing report node")
        return self.report_agent.execute(state)

    def execute(self, config: RunConfig, which: str = "all", keep_samples: bool = False) -> Dict[str, Any]:
        """
        Execute the verification workflow

        Args:
            config: Validated run config
            which: pde, mc or all
            keep_samples: Keep the Monte Carlo per-path samples in the final state

        Returns:
            Final state with the report
        """
        logger.info(f"Starting verification ({which})")
        initial_state: VerificationState = {
            "which": which,
            "config": config,
            "checks": [],
            "messages": [],
            "surface": None,
            "keep_samples": keep_samples,
            "samples": None,
            "report": None,
        }
        try:
            result = self.app.invoke(initial_state)
            logger.info("Workflow completed successfully")
            return result
        except Exception as e:
            logger.error(f"Workflow execution error: {e}")
            raise
