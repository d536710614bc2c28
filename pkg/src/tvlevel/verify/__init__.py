"""Oracles, property checks and the manifest runner."""

from .checks import CHECKS, CheckReport
from .suite import load_manifest, run_suite

__all__ = ["CHECKS", "CheckReport", "load_manifest", "run_suite"]
