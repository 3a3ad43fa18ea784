"""
Experiment runner for magdecay.

This package reads JSON experiment configs, runs the numerical experiments
of the ``src`` package and writes machine-readable reports and plots.
"""

from .cli import main
from .config import ExperimentConfig, load_config, parse_config
from .experiments import ExperimentResult, run_experiment

__all__ = ["main", "ExperimentConfig", "load_config", "parse_config", "ExperimentResult", "run_experiment"]
