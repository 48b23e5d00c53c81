"""Bayesian optimization of approximate pure Nash equilibria for
black-box games, with a multi-cell downlink power-control benchmark."""

from .acquisition import AcquisitionConfig, ppr_ucb_run
from .cellular import NetworkConfig, power_game_oracle
from .confidence import PprConfidenceSet, ValueInterval, utility_interval, regret_interval
from .games import (
    ActionProfile,
    EquilibriumReport,
    GameSpec,
    UtilityOracle,
    epsilon_star,
    is_epsilon_pne,
    noisy_observe,
    true_regret,
)
from .harness import ExperimentConfig, load_config, parse_config, run_experiment
from .surrogate import KernelConfig, RffFeatureMap

__version__ = "0.1.0"

__all__ = [
    "AcquisitionConfig",
    "ActionProfile",
    "EquilibriumReport",
    "ExperimentConfig",
    "GameSpec",
    "KernelConfig",
    "NetworkConfig",
    "PprConfidenceSet",
    "RffFeatureMap",
    "UtilityOracle",
    "ValueInterval",
    "epsilon_star",
    "is_epsilon_pne",
    "load_config",
    "noisy_observe",
    "parse_config",
    "power_game_oracle",
    "ppr_ucb_run",
    "regret_interval",
    "run_experiment",
    "true_regret",
    "utility_interval",
]
