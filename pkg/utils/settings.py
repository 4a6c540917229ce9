"""
Configuration helpers for the sequential pricing lab
Handles schema defaults, override files and comma-separated settings
"""

import json
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Optional

from .log import logger

SCHEMA_PATH = Path(__file__).resolve().parent.parent / "_conf_schema.json"


@lru_cache(maxsize=1)
def load_schema() -> Dict[str, Dict]:
    """Load the configuration schema shipped with the project"""
    with open(SCHEMA_PATH, "r", encoding="utf-8") as f:
        return json.load(f)


def get_setting(config: Optional[Dict], key: str) -> Any:
    """
    Read a setting, falling back to its schema default.

    Args:
        config: User configuration (may be None)
        key: Setting name declared in _conf_schema.json

    Returns:
        Configured value or schema default

    Raises:
        KeyError: If the key is not declared in the schema
    """
    if config and key in config:
        return config[key]
    schema = load_schema()
    if key not in schema:
        raise KeyError(f"Unknown setting: {key}")
    return schema[key]["default"]


def load_config(path: Optional[str]) -> Dict:
    """
    Load a JSON object of setting overrides.

    Unknown keys are kept but logged, so typos are visible.

    Args:
        path: Path to the overrides file, or None

    Returns:
        Dictionary of overrides (empty when path is None)
    """
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as f:
        config = json.load(f)
    if not isinstance(config, dict):
        raise ValueError(f"Config file {path} must hold a JSON object")
    schema = load_schema()
    for key in config:
        if key not in schema:
            logger.warning(f"Ignoring unknown setting in {path}: {key}")
    return config


def parse_float_list(text: Optional[str], fallback: Optional[List[float]] = None) -> List[float]:
    """
    Parse a comma-separated list of numbers.

    "inf" is accepted. An empty string gives an empty list.

    Args:
        text: Comma-separated values
        fallback: Returned (with a warning) when text is malformed

    Returns:
        List of floats
    """
    if text is None or not str(text).strip():
        return []
    try:
        return [float(x.strip()) for x in str(text).split(",") if x.strip()]
    except Exception as e:
        logger.warning(f"Invalid number list {text!r}: {e}, using default {fallback}")
        return list(fallback or [])


def parse_int_list(text: Optional[str], fallback: Optional[List[int]] = None) -> List[int]:
    """Parse a comma-separated list of integers, like parse_float_list"""
    if text is None or not str(text).strip():
        return []
    try:
        return [int(x.strip()) for x in str(text).split(",") if x.strip()]
    except Exception as e:
        logger.warning(f"Invalid integer list {text!r}: {e}, using default {fallback}")
        return list(fallback or [])
