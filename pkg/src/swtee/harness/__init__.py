"""Simulation, adversary, scenario runner and benchmark."""

from .scenario import ScenarioReport, Simulation, node_id_for, parse_script, run_scenario
from .simlink import Action, Rule, SimLink

__all__ = [
    "Action", "Rule", "ScenarioReport", "SimLink", "Simulation", "node_id_for", "parse_script", "run_scenario",
]
