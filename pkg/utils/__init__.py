"""
Utilities for the sequential pricing lab
"""

from . import (
    core,
    exante,
    formatter,
    instance_storage,
    instances,
    mechanisms,
    ocrs,
    rrs,
    settings,
    verify,
)

__all__ = [
    "core",
    "exante",
    "formatter",
    "instance_storage",
    "instances",
    "mechanisms",
    "ocrs",
    "rrs",
    "settings",
    "verify",
]
