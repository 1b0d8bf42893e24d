"""Discrete-event simulation of edge computing federations for mobile IoT."""
from .devs import INFINITY, Atomic, Coupled, ModelError, Simulator
from .scenario import ScenarioConfig, Scenario, load_config, parse_config, run_scenario

__version__ = "0.1.0"

__all__ = ["INFINITY", "Atomic", "Coupled", "ModelError", "Simulator", "Scenario",
           "ScenarioConfig", "load_config", "parse_config", "run_scenario"]
