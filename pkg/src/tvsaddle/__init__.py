"""Decentralized saddle-point optimization over time-varying graphs."""
from .config import ExperimentConfig
from .consensus import Acogwmc, AccGossip, ExactAverage, PlainGossip
from .exceptions import ConfigError, TvSaddleError
from .graphs import Graph, GraphSequence
from .harness import run_experiment
from .problems import LowerBoundProblem, SaddleProblem, make_bilinear_problem, make_lower_bound_problem
from .solver import DecentralizedExtraStep, SolverConfig, desm_run

__version__ = "0.1.0"
