"""Closed-loop fault-tolerant control simulator for a differential-drive robot."""

from ._core import (
    ConfigError,
    ControllerKind,
    FilterKind,
    IoError,
    ScenarioConfig,
    SimLog,
    csv_header,
    export_csv,
    first_onset,
    innovation_coverage,
    lgl_basis,
    mode_fraction,
    parse_csv,
    radius_rmse,
    run_scenario,
    saturation_duty,
    settle_time,
    tracking_rms,
)

__all__ = [
    "ConfigError",
    "ControllerKind",
    "FilterKind",
    "IoError",
    "ScenarioConfig",
    "SimLog",
    "csv_header",
    "export_csv",
    "first_onset",
    "innovation_coverage",
    "lgl_basis",
    "mode_fraction",
    "parse_csv",
    "radius_rmse",
    "run_scenario",
    "saturation_duty",
    "settle_time",
    "tracking_rms",
]
