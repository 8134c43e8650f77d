"""
Simulation Module

Configuration, fault plans, household agents, the billing-period
orchestrator and the run report writer.
"""

from .config import SimConfig, build_config, load_config
from .faults import Fault, FaultKind, FaultPlan
from .household import Household, MessageRouter
from .orchestrator import PHASES, TIMED_PHASES, CycleOutcome, RunReport, Simulator, run_period
from .report import format_report, format_timings, write_run

__all__ = [
    "SimConfig",
    "build_config",
    "load_config",
    "Fault",
    "FaultKind",
    "FaultPlan",
    "Household",
    "MessageRouter",
    "PHASES",
    "TIMED_PHASES",
    "CycleOutcome",
    "RunReport",
    "Simulator",
    "run_period",
    "format_report",
    "format_timings",
    "write_run",
]
