"""Validation helpers shared by the schemas and the scenario parser."""
import math
from typing import Iterable, Tuple


# TBS port labels: inputs 1-2, internal 3-4, outputs 5-6
TBS_PORTS: Tuple[int, ...] = (1, 2, 3, 4, 5, 6)
MAX_PORTS = 64
MAX_OAM_RANGE = 32
MAX_GRID_POINTS = 200_000


def validate_angle_deg(angle: float) -> float:
    """Angles are free reals but must be finite."""
    if angle is None or not math.isfinite(angle):
        raise ValueError("angle must be a finite number of degrees")
    return float(angle)


def validate_phase_rad(phase: float) -> float:
    if phase is None or not math.isfinite(phase):
        raise ValueError("phase must be a finite number of radians")
    return float(phase)


def validate_extinction_db(db: float) -> float:
    """Extinction is a power ratio in dB; inf means an ideal element."""
    if db is None or math.isnan(db):
        raise ValueError("extinction must be a number")
    if db < 0:
        raise ValueError("extinction must be ≥ 0")
    return float(db)


def validate_transmittance(value: float) -> float:
    if value is None or not math.isfinite(value):
        raise ValueError("transmittance must be a finite number")
    if value < 0 or value > 1:
        raise ValueError("transmittance must lie in [0, 1]")
    return float(value)


def validate_oam_range(oam_range: int) -> int:
    if oam_range < 0:
        raise ValueError("OAM truncation must be >= 0")
    if oam_range > MAX_OAM_RANGE:
        raise ValueError(f"OAM truncation must be at most {MAX_OAM_RANGE}")
    return oam_range


def validate_ports(ports: Iterable[int]) -> Tuple[int, ...]:
    """Port labels are unique positive integers, order preserved."""
    ports = tuple(int(p) for p in ports)

    if not ports:
        raise ValueError("at least one port is required")

    if len(ports) > MAX_PORTS:
        raise ValueError(f"at most {MAX_PORTS} ports are supported")

    if len(set(ports)) != len(ports):
        raise ValueError("port labels must be unique")

    if any(p < 1 for p in ports):
        raise ValueError("port labels must be positive integers")

    return ports


def validate_tbs_ports(ports: Iterable[int]) -> Tuple[int, ...]:
    ports = validate_ports(ports)
    missing = sorted(set(TBS_PORTS) - set(ports))
    if missing:
        raise ValueError(f"TBS benches need ports 1-6, missing {missing}")
    return ports


def validate_input_port(port: int) -> int:
    if port not in (1, 2):
        raise ValueError("light enters the TBS from Port 1 or Port 2")
    return port


def validate_sr_th(sr_th: float) -> float:
    """Theoretical splitting ratios are the weak-arm fraction, (0, 0.5]."""
    if sr_th is None or not math.isfinite(sr_th):
        raise ValueError("splitting ratio must be a finite number")
    if sr_th <= 0 or sr_th > 0.5:
        raise ValueError("theoretical splitting ratio must lie in (0, 0.5]")
    return float(sr_th)


def validate_grid(start: float, stop: float, step: float) -> None:
    if not (math.isfinite(start) and math.isfinite(stop) and math.isfinite(step)):
        raise ValueError("grid bounds must be finite")
    if step <= 0:
        raise ValueError("step must be > 0")
    if stop < start:
        raise ValueError("stop must not be below start")
    if (stop - start) / step + 1 > MAX_GRID_POINTS:
        raise ValueError(f"grid exceeds {MAX_GRID_POINTS} points")


def validate_repeats(repeats: int) -> int:
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    return repeats


def validate_sigma(sigma: float) -> float:
    if sigma is None or not math.isfinite(sigma) or sigma < 0:
        raise ValueError("sigma must be a finite number >= 0")
    return float(sigma)
