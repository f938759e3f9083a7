"""Configuration loader."""

from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import yaml

from action_signal.config.schema import RunConfig
from action_signal.core.exceptions import ConfigurationError
from action_signal.utils.logger import logger

CONFIG_SUFFIXES = (".yaml", ".yml", ".json")


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively merge two dictionaries; values from override win.

    Args:
        base: Earlier configuration
        override: Later configuration

    Returns:
        New merged dictionary
    """
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


class ConfigManager:
    """Manages run configuration loading and access."""

    DEFAULT_CONFIG_DIR = "configs"

    def __init__(
        self, config_path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None
    ):
        """Initialize configuration manager.

        Args:
            config_path: Path to a configuration file or a directory of files.
                If None, the built-in defaults are used.
            overrides: Nested dictionary applied on top of the loaded files
        """
        self.config_path = config_path
        self.overrides = overrides or {}
        self._config: Optional[RunConfig] = None

    def config_files(self) -> List[Path]:
        """List configuration files in load order.

        Returns:
            Files sorted alphabetically when config_path is a directory

        Raises:
            ConfigurationError: If config_path does not exist.
        """
        if not self.config_path:
            return []

        path = Path(self.config_path)
        if path.is_file():
            return [path]
        if path.is_dir():
            return sorted(p for p in path.iterdir() if p.suffix in CONFIG_SUFFIXES)
        raise ConfigurationError(f"Configuration path not found: {self.config_path}")

    def load_config_files(self) -> List[Tuple[str, dict]]:
        """Load all configuration files.

        Returns:
            List of (filepath, data) tuples

        Raises:
            ConfigurationError: If a file cannot be parsed.
        """
        loaded = []
        for config_file in self.config_files():
            try:
                with open(config_file, "r", encoding="utf-8") as f:
                    # JSON is a subset of YAML, one parser covers both formats
                    data = yaml.safe_load(f) or {}
            except yaml.YAMLError as e:
                raise ConfigurationError(f"Invalid configuration file {config_file}: {e}") from e
            if not isinstance(data, dict):
                raise ConfigurationError(f"Configuration file {config_file} must hold a mapping")
            loaded.append((str(config_file), data))
            logger.info(f"Loaded config: {config_file.name}")
        return loaded

    def merge_configs(self, configs: List[Tuple[str, dict]]) -> dict:
        """Merge configuration dictionaries in order, later files overriding earlier ones.

        Args:
            configs: List of (filepath, data) tuples

        Returns:
            Merged configuration dictionary
        """
        merged: Dict[str, Any] = {}
        for _, data in configs:
            merged = deep_merge(merged, data)
        if len(configs) > 1:
            logger.info(f"Merged {len(configs)} config files")
        return merged

    def load(self) -> RunConfig:
        """Load, merge, override and validate the configuration.

        Returns:
            RunConfig instance

        Raises:
            ConfigurationError: If configuration is invalid.
        """
        merged = self.merge_configs(self.load_config_files())
        merged = deep_merge(merged, self.overrides)
        try:
            self._config = RunConfig.from_dict(merged)
        except ConfigurationError:
            raise
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigurationError(f"Error loading configuration: {e}") from e
        return self._config

    @property
    def config(self) -> RunConfig:
        """Get loaded configuration, loading it on first access."""
        if self._config is None:
            self.load()
        return self._config

    def save(self, filepath: Path, config: Optional[RunConfig] = None) -> None:
        """Write a configuration as YAML.

        Args:
            filepath: Destination path
            config: Configuration to write (defaults to the loaded one)
        """
        config = config or self.config
        filepath.parent.mkdir(parents=True, exist_ok=True)
        with open(filepath, "w", encoding="utf-8") as f:
            yaml.safe_dump(config.to_dict(), f, default_flow_style=False, sort_keys=False)
