"""
Defaults shared by the library, the CLI and the HTTP service.

Values are resolved in increasing priority: DEFAULTS, ``PH_*`` environment
variables, an optional ``key=value`` config file, explicit arguments.
"""
import os
import logging
from typing import Any, Dict, Optional

from dotenv import dotenv_values

logger = logging.getLogger('phaseharmonics')

DEFAULTS: Dict[str, Any] = {
    'd': 1,
    'n': 1024,
    'j': None,          # None means log2(n)
    'q': 1,
    'l': 4,
    'delta': 4,
    'beta': 1.0,
    'k2_max': 16,
    'include_lowpass': True,
    'cross_angles': False,
    'kmax': 32,
    'restarts': 10,
    'max_iters': 2000,
    'memory': 10,
    'c1': 1e-4,
    'c2': 0.9,
    'grad_tol': 1e-12,
    'init_scale': 1.0,
    'seed': 0,
    'stream': 0,
    'fft_workers': 1,
    'restart_workers': 1,
}

ENV_PREFIX = 'PH_'


def _coerce(value: str, default: Any) -> Any:
    """Convert a string setting to the type of its default"""
    if isinstance(default, bool):
        return value.strip().lower() in ('1', 'true', 'yes', 'on')
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    if default is None:
        try:
            return int(value)
        except ValueError:
            return value
    return value


def _apply(settings: Dict[str, Any], source: Dict[str, Optional[str]], origin: str) -> None:
    for key, raw in source.items():
        name = key.lower()
        if name.startswith(ENV_PREFIX.lower()):
            name = name[len(ENV_PREFIX):]
        if name not in DEFAULTS or raw is None or raw == '':
            continue
        try:
            settings[name] = _coerce(raw, DEFAULTS[name])
        except ValueError:
            raise ValueError(f"Invalid value for '{name}' in {origin}: {raw!r}")


def load_settings(config_path: Optional[str] = None) -> Dict[str, Any]:
    """
    Resolve settings from defaults, environment and an optional config file

    Args:
        config_path: Plain key=value file read with python-dotenv

    Returns:
        Dictionary with one entry per key of DEFAULTS
    """
    settings = dict(DEFAULTS)
    env = {k: v for k, v in os.environ.items() if k.startswith(ENV_PREFIX)}
    _apply(settings, env, 'environment')

    if config_path:
        if not os.path.exists(config_path):
            raise ValueError(f"Config file not found: {config_path}")
        _apply(settings, dotenv_values(config_path), config_path)
        logger.info(f"Loaded settings from {config_path}")

    return settings
