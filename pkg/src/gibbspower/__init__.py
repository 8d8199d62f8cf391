"""Gibbs-sampling distributed power control: asynchronous link-level
simulator plus exact Markov-chain analytics for the discrete variant."""

from gibbspower.channel import GainMatrix, Topology, benchmark8, generate_topology, sinr
from gibbspower.utility import (
    CustomUtility,
    ProportionalFairness,
    TotalThroughput,
    evaluate,
    make_utility,
)
from gibbspower.sampler import PowerGrid
from gibbspower.engine import SimTrace, run_simulation
from gibbspower.config import ExperimentConfig, load_config

__version__ = "0.1.0"

__all__ = [
    "GainMatrix",
    "Topology",
    "benchmark8",
    "generate_topology",
    "sinr",
    "CustomUtility",
    "ProportionalFairness",
    "TotalThroughput",
    "evaluate",
    "make_utility",
    "PowerGrid",
    "SimTrace",
    "run_simulation",
    "ExperimentConfig",
    "load_config",
    "__version__",
]
