"""Joint user scheduling and link configuration for a mmWave access point.

Provides a slot-level network simulator, an empirical bandit controller, a
clipped-surrogate actor-critic controller on a numpy MLP, and a harness that
trains/tests them and writes plot-ready metric files.
"""
from .config import ConfigError, MabConfig, PpoConfig, ScenarioConfig, load_scenario, parse_scenario
from .env import MmWaveEnv
from .harness import MetricsRow, make_controller, test, train
from .mab import MabController
from .ppo import PpoController

__all__ = [
    "ConfigError", "MabConfig", "PpoConfig", "ScenarioConfig", "load_scenario", "parse_scenario",
    "MmWaveEnv", "MetricsRow", "make_controller", "test", "train", "MabController", "PpoController",
]
