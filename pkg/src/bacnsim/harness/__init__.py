"""Config loading, experiment running, sweeps, oracle comparison and the CLI."""
from .config import ExperimentConfig, SWEEPABLE, load_config, validate, with_value
from .runner import evaluate_policy_file, oracle, run_experiment, sweep

__all__ = ["ExperimentConfig", "SWEEPABLE", "load_config", "validate", "with_value",
           "run_experiment", "sweep", "oracle", "evaluate_policy_file"]
