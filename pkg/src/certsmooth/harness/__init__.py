"""End-to-end certification driver: configs, runs, curves, reports, CLI."""

from .config import ConfigError, RunConfig, load_config
from .curves import (
    CertRecord,
    CurvePoint,
    certified_accuracy_curve,
    group_by_sigma,
    multi_sigma_envelope,
)
from .runner import run_certification

__all__ = [
    "CertRecord",
    "ConfigError",
    "CurvePoint",
    "RunConfig",
    "certified_accuracy_curve",
    "group_by_sigma",
    "load_config",
    "multi_sigma_envelope",
    "run_certification",
]
