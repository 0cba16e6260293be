"""Supercapacitor bank models for power-system frequency and LVRT studies."""

from .bank import BankConfig
from .cell import CellParams, CellState, IdealCellParams, SlowBranch
from .control import FreqCtrlParams, GateParams, LvrtParams, PQParams
from .engine import SimConfig, SimResult, System, run
from .errors import ConfigError, DomainError, SimulationAbort
from .grid import Disturbance, SfrParams, metrics
from .scenario import Scenario, default_scenario, load, loads

__version__ = "0.1.0"

__all__ = [
    "BankConfig", "CellParams", "CellState", "IdealCellParams", "SlowBranch",
    "FreqCtrlParams", "GateParams", "LvrtParams", "PQParams",
    "SimConfig", "SimResult", "System", "run",
    "ConfigError", "DomainError", "SimulationAbort",
    "Disturbance", "SfrParams", "metrics",
    "Scenario", "default_scenario", "load", "loads",
]
