"""Sinai's random walk in random environment: simulation, landscape analysis
and reconstruction of the random potential from a single trajectory."""

__version__ = "0.1.0"

from .errors import ConfigError, UsageError
from .env_model import (
    Environment,
    EnvironmentSpec,
    PotentialPath,
    extend_environment,
    hypothesis_diagnostics,
    potential,
    sample_environment,
)
from .walk_sim import WalkRun, run_walk, run_from_steps
from .landscape import BasicValley, ValleyTriple, find_basic_valley
from .estimator import EstimateTable, estimate_table, l_gamma_set

__all__ = [
    "ConfigError", "UsageError", "Environment", "EnvironmentSpec", "PotentialPath",
    "extend_environment", "hypothesis_diagnostics", "potential", "sample_environment",
    "WalkRun", "run_walk", "run_from_steps", "BasicValley", "ValleyTriple",
    "find_basic_valley", "EstimateTable", "estimate_table", "l_gamma_set",
]
