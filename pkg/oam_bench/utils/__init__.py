"""Utility functions and validation."""
from oam_bench.utils.validation import (
    validate_angle_deg,
    validate_phase_rad,
    validate_extinction_db,
    validate_transmittance,
    validate_oam_range,
    validate_ports,
    validate_tbs_ports,
    validate_input_port,
    validate_sr_th,
    validate_grid,
    validate_repeats,
    validate_sigma,
    TBS_PORTS,
    MAX_PORTS,
    MAX_OAM_RANGE,
    MAX_GRID_POINTS,
)

__all__ = [
    "validate_angle_deg",
    "validate_phase_rad",
    "validate_extinction_db",
    "validate_transmittance",
    "validate_oam_range",
    "validate_ports",
    "validate_tbs_ports",
    "validate_input_port",
    "validate_sr_th",
    "validate_grid",
    "validate_repeats",
    "validate_sigma",
    "TBS_PORTS",
    "MAX_PORTS",
    "MAX_OAM_RANGE",
    "MAX_GRID_POINTS",
]
