import copy
import os
import yaml
from pathlib import Path
from typing import Dict, Any, Optional

from src.core.errors import ConfigurationError


class Config:
    _instance = None
    _config: Dict[str, Any] = {}

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super(Config, cls).__new__(cls)
            cls._instance._load_config()
        return cls._instance

    def _load_config(self):
        # Project root (this file is in src/core/)
        project_root = Path(__file__).parent.parent.parent
        config_path = project_root / "config.yaml"

        env_path = project_root / ".env"
        if env_path.exists():
            from dotenv import load_dotenv
            load_dotenv(env_path)

        if not config_path.exists():
            raise FileNotFoundError(f"Config file not found at {config_path}")

        with open(config_path, "r") as f:
            self._config = yaml.safe_load(f)

    @property
    def system(self) -> Dict[str, Any]:
        return self._config.get("system", {})

    @property
    def data(self) -> Dict[str, Any]:
        return self._config.get("data", {})

    @property
    def model(self) -> Dict[str, Any]:
        return self._config.get("model", {})

    @property
    def train(self) -> Dict[str, Any]:
        return self._config.get("train", {})

    @property
    def evaluation(self) -> Dict[str, Any]:
        return self._config.get("evaluation", {})

    def get(self, key: str, default=None) -> Any:
        return self._config.get(key, default)

    def snapshot(self) -> Dict[str, Any]:
        """Deep copy of the loaded defaults; callers layer overrides on top."""
        return copy.deepcopy(self._config)

    def output_dir(self) -> Path:
        env_name = self.system.get("output_dir_env", "FORECASTER_OUTPUT_DIR")
        return Path(os.getenv(env_name) or self.system.get("output_dir", "runs"))


def apply_overrides(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """
    Returns a copy of `base` with flat dotted keys applied,
    e.g. {"model.latent_dim": 16, "train.ethucy.epochs": 5}.
    """
    merged = copy.deepcopy(base)
    for dotted, value in overrides.items():
        if value is None:
            continue
        parts = dotted.split(".")
        node = merged
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigurationError(f"Override '{dotted}' descends into non-section '{part}'")
            node = child
        node[parts[-1]] = value
    return merged


def load_override_file(path: Path) -> Dict[str, Any]:
    """Flat dotted-key file; JSON is read through the YAML loader."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Override file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        loaded = yaml.safe_load(f) or {}
    if not isinstance(loaded, dict):
        raise ConfigurationError(f"Override file {path} must hold a mapping of dotted keys")
    return loaded


config = Config()
