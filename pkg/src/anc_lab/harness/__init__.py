"""Scenario configuration, execution, sweeps and CSV export."""

from .config import ConfigError, NoiseConfig, PathConfig, ScenarioConfig
from .export import export_summary, export_trace, manifest
from .runner import GridTooLargeError, prepare, read_grid, run_prepared, run_scenario, sweep

__all__ = [
    "ConfigError",
    "GridTooLargeError",
    "NoiseConfig",
    "PathConfig",
    "ScenarioConfig",
    "export_summary",
    "export_trace",
    "manifest",
    "prepare",
    "read_grid",
    "run_prepared",
    "run_scenario",
    "sweep",
]
