"""Experiment harness: configuration, claim checks and the command line."""

from .config import ExperimentConfig, load_config, parse_config, run_experiment, scenario_s1, write_outputs
from .report import ClaimRecord, VerificationReport
from .verification import CLAIMS, run_suite

__all__ = [
    "CLAIMS", "ClaimRecord", "ExperimentConfig", "VerificationReport", "load_config",
    "parse_config", "run_experiment", "run_suite", "scenario_s1", "write_outputs",
]
