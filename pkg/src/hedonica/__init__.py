"""Hedonica: seeded simulation of history-based hedonic coalition formation.

Self-interested agents negotiate coalitions through a two-phase propose /
confirm protocol, keep trust records on each other, pay penalties and fees
for switching, and pick what to propose according to one of three risk
attitudes.
"""

__version__ = "0.1.0"

from .domain import (
    AgentProfile,
    Coalition,
    CoalitionSet,
    ResponderType,
    RiskAttitude,
    SimConfig,
    validate_config,
)
from .engine import ConfigError, RunResult, SimulationInvariantError, run_simulation

__all__ = [
    "AgentProfile",
    "Coalition",
    "CoalitionSet",
    "ConfigError",
    "ResponderType",
    "RiskAttitude",
    "RunResult",
    "SimConfig",
    "SimulationInvariantError",
    "run_simulation",
    "validate_config",
    "__version__",
]
