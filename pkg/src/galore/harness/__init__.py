"""Experiment harness: run configs, toy tasks, the training runner,
ablation grids, the verification suite, and the CLI."""

from .config import RunConfig, load_config, validate_config
from .runner import RunResult, make_rng, run_ablation, run_train
from .verify import run_verify

__all__ = [
    "RunConfig", "load_config", "validate_config",
    "RunResult", "make_rng", "run_ablation", "run_train",
    "run_verify",
]
