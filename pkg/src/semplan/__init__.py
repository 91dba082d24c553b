"""Sampling-based multi-robot mission planning over uncertain semantic maps."""

from .executor import MissionTrace, execute
from .ltl import compile_to_dfa, parse_cosafe_ltl, prune_dfa
from .planner import PlanResult, plan
from .scenario import Scenario, benchmark_scenario, load_scenario

__version__ = "0.1.0"

__all__ = [
    "MissionTrace",
    "PlanResult",
    "Scenario",
    "benchmark_scenario",
    "compile_to_dfa",
    "execute",
    "load_scenario",
    "parse_cosafe_ltl",
    "plan",
    "prune_dfa",
    "__version__",
]
