"""Config-driven experiment runner and CLI."""

from .config import CapacityError, ConfigError, ExperimentConfig, check_config, list_presets, load_config

__all__ = ["CapacityError", "ConfigError", "ExperimentConfig", "check_config", "list_presets", "load_config"]
