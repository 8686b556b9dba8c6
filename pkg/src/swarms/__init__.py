"""Swarm-based computation over named, append-only log pairs."""

from .naming import Name, parse_expression, parse_name, print_expression
from .scenario import Scenario, ScenarioError, load_scenario, parse_scenario
from .sim import Metrics, SimResult, Simulator, run

__all__ = [
    "Name", "parse_name", "parse_expression", "print_expression",
    "Scenario", "ScenarioError", "load_scenario", "parse_scenario",
    "Metrics", "SimResult", "Simulator", "run",
]
