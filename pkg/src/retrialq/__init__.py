"""Solver toolkit for multi-server retrial queues with catastrophes,
phase-type services and retrials, preemptive handoff priority, and a
backup channel bank active during repairs.
"""
from .config import (ConfigError, ModelConfig, Nsga2Settings, SolverSettings,
                     config_from_dict, config_to_dict, dump_config,
                     parse_config, patch_config)
from .ergodicity import ErgodicityReport, check_ergodicity
from .measures import PerformanceReport, SweepRow, compute_report, sweep
from .nsga2 import Candidate, OptimizationResult, optimize
from .simulate import SimEstimate, SimResult, simulate
from .solver import (NumericalFailure, StationaryDistribution,
                     UnstableConfigError, solve_stationary)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ModelConfig", "Nsga2Settings", "SolverSettings",
    "config_from_dict", "config_to_dict", "dump_config", "parse_config",
    "patch_config", "ErgodicityReport", "check_ergodicity",
    "PerformanceReport", "SweepRow", "compute_report", "sweep",
    "Candidate", "OptimizationResult", "optimize",
    "SimEstimate", "SimResult", "simulate",
    "NumericalFailure", "StationaryDistribution", "UnstableConfigError",
    "solve_stationary", "__version__",
]
