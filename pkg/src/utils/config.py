"""
Configuration utility for package defaults and stage configuration files.
"""

import json
import os
import sys
from typing import Any, Dict, Mapping, Optional

from src.utils.errors import ArtifactError, ConfigError


class Config:
    """
    Read-only access to the bundled ``config.json`` defaults.

    The class is a singleton: the file is parsed once per process. Values are
    looked up with dot notation (``Config().get("gbt.eta")``) and the typed getters
    below return whole sections with built-in fallbacks.
    """
    _instance = None
    _config: Dict[str, Any] = {}

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super(Config, cls).__new__(cls)
        return cls._instance

    def __init__(self):
        if not self._config:
            self._load_config()

    def _load_config(self):
        """
        Load the package defaults from config.json.

        The file holds one section per stage:
            - paths: run log location
            - runtime: default worker threads
            - synth: cohort generator defaults and planted effects
            - etl: preprocessing rules, windowing and split
            - gbt: boosting hyperparameters
            - tune: coordinate descent settings
            - importance: coverage threshold and SHAP top-k
            - tsne: embedding optimiser settings
            - viz: figure size and colour ramp
        """
        if getattr(sys, 'frozen', False):
            # Running as a PyInstaller bundle
            base_path = os.path.dirname(sys.executable)
        else:
            base_path = os.path.dirname(__file__)
        config_path = os.path.join(base_path, 'config.json')
        try:
            with open(config_path, 'r', encoding='utf-8') as f:
                Config._config = json.load(f)
        except FileNotFoundError:
            _warn(f"Config file not found at {config_path}")
            Config._config = {}
        except json.JSONDecodeError:
            _warn(f"Invalid JSON in config file at {config_path}")
            Config._config = {}

    def get(self, key: str, default: Any = None) -> Any:
        """Get a configuration value using dot notation."""
        keys = key.split('.')
        value = self._config

        for k in keys:
            if isinstance(value, dict):
                value = value.get(k, default)
            else:
                return default

        return value

    def get_run_log_path(self) -> str:
        """Get the run log path."""
        return self.get('paths.run_log_path', 'efshap_run_log.txt')

    def get_default_threads(self) -> int:
        """Get the default worker thread count."""
        return int(self.get('runtime.threads', 1))

    def get_synth_defaults(self) -> dict:
        """Get the cohort generator defaults."""
        return dict(self.get('synth', {}))

    def get_etl_defaults(self) -> dict:
        """Get the ETL defaults, split settings included."""
        return dict(self.get('etl', {}))

    def get_hyperparam_defaults(self) -> dict:
        """Get the boosting hyperparameter defaults."""
        return dict(self.get('gbt', {
            'n_trees': 100,
            'max_depth': 3,
            'eta': 0.35,
            'min_child_weight': 1.0,
            'col_sample_by_tree': 1.0,
            'col_sample_by_level': 1.0,
            'subsample': 0.85,
            'reg_alpha': 0.0,
            'reg_lambda': 0.5,
            'gamma': 0.0,
            'seed': 0
        }))

    def get_tune_config(self) -> dict:
        """Get the coordinate descent settings."""
        return dict(self.get('tune', {
            'folds': 5,
            'max_sweeps': 5,
            'seed': 0,
            'order': ['max_depth', 'eta', 'n_trees', 'min_child_weight', 'subsample',
                      'col_sample_by_tree', 'col_sample_by_level', 'reg_lambda', 'reg_alpha', 'gamma']
        }))

    def get_coverage_threshold(self) -> float:
        """Get the minimum coverage reported by the importance listing."""
        return float(self.get('importance.coverage_threshold', 0.01))

    def get_shap_top_k(self) -> int:
        """Get the number of features shown in SHAP summaries."""
        return int(self.get('importance.shap_top_k', 20))

    def get_tsne_defaults(self) -> dict:
        """Get the t-SNE optimiser defaults."""
        return dict(self.get('tsne', {
            'perplexity': 100.0,
            'n_iter': 1000,
            'learning_rate': 200.0,
            'early_exaggeration': 12.0,
            'exaggeration_iters': 250,
            'momentum_start': 0.5,
            'momentum_final': 0.8,
            'momentum_switch_iter': 250,
            'init_sd': 1e-4,
            'seed': 0
        }))

    def get_viz_config(self) -> dict:
        """Get the figure defaults (size, colour ramp, marker radius)."""
        return dict(self.get('viz', {
            'width': 800,
            'height': 600,
            'top_k': 20,
            'low_color': '#008bfb',
            'high_color': '#ff0051',
            'missing_color': '#9a9a9a',
            'point_radius': 2.5,
            'seed': 0
        }))


def _warn(message):
    from src.utils.run_log import RunLog  # run_log imports this module
    RunLog().add(message, level="WARNING")


def load_json_config(path: str) -> dict:
    """
    Read a JSON configuration file.

    Parameters
    ----------
    path : str
        Path to the JSON file.

    Returns
    -------
    dict
        The parsed object.

    Raises
    ------
    ArtifactError
        If the file cannot be read.
    ConfigError
        If the file is not valid JSON or its top level is not an object.
    """
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except OSError as e:
        raise ArtifactError(f"{path}: cannot read config ({e.strerror or e})") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno} column {e.colno}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: $: top level must be a JSON object")
    return data


def check_keys(data: Mapping[str, Any], allowed, path: str = "$") -> None:
    """Reject keys that a config section does not define."""
    if not isinstance(data, Mapping):
        raise ConfigError(f"{path}: must be a JSON object")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}: unknown key")


def check_schema_version(data: Mapping[str, Any], path: str = "$", supported: int = 1) -> None:
    """Accept a missing ``schema_version`` or the supported one."""
    version = data.get('schema_version', supported)
    if version != supported:
        raise ConfigError(f"{path}.schema_version: unsupported version {version!r} (expected {supported})")


def as_number(value: Any, path: str, lo: Optional[float] = None, hi: Optional[float] = None,
              lo_open: bool = False, hi_open: bool = False, integer: bool = False):
    """
    Validate a numeric config value against an interval.

    Parameters
    ----------
    value : Any
        Raw JSON value.
    path : str
        JSON path used in the error message.
    lo, hi : float, optional
        Interval bounds; ``None`` means unbounded.
    lo_open, hi_open : bool
        Whether the respective bound is excluded.
    integer : bool
        Require an integral value and return an ``int``.

    Returns
    -------
    int or float
    """
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    if integer:
        if float(value) != int(value):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        value = int(value)
    else:
        value = float(value)
    if value != value:
        raise ConfigError(f"{path}: must be finite")
    left = "(" if lo_open else "["
    right = ")" if hi_open else "]"
    interval = f"{left}{'-inf' if lo is None else lo}, {'inf' if hi is None else hi}{right}"
    if lo is not None and (value < lo or (lo_open and value == lo)):
        raise ConfigError(f"{path}: must be in {interval}, got {value}")
    if hi is not None and (value > hi or (hi_open and value == hi)):
        raise ConfigError(f"{path}: must be in {interval}, got {value}")
    return value
