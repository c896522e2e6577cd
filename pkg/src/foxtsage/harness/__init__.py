"""Experiment grids, comparisons and reports."""

from .config import SETTINGS, ExperimentConfig, load_config, parse_config_text
from .report import Comparison, PairingError, compare, emit_reports
from .runner import RunRecord, load_cell, load_split, run_cell, save_cell

__all__ = [
    "SETTINGS", "ExperimentConfig", "load_config", "parse_config_text",
    "Comparison", "PairingError", "compare", "emit_reports",
    "RunRecord", "load_cell", "load_split", "run_cell", "save_cell",
]
