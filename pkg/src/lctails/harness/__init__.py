"""Experiment harness: configs, runner, ledgers, report and CLI."""

from lctails.harness.config import ConfigError, ExperimentConfig, load_config, parse_config, smoke_config
from lctails.harness.runner import RunReport, run_experiment

__all__ = ["ConfigError", "ExperimentConfig", "RunReport", "load_config", "parse_config",
           "run_experiment", "smoke_config"]
