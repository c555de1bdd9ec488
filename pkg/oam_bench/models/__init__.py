from oam_bench.models.mode_space import (
    Polarization,
    ModeIndex,
    ModeSpace,
    FieldState,
    ScatteringOperator,
    flatten,
    unflatten,
    apply,
    compose,
    compose_all,
    identity,
    port_intensity,
)
from oam_bench.models.devices import CoatingSide, DeviceKind, PbsRouting

__all__ = [
    "Polarization", "ModeIndex", "ModeSpace", "FieldState", "ScatteringOperator",
    "flatten", "unflatten", "apply", "compose", "compose_all", "identity", "port_intensity",
    "CoatingSide", "DeviceKind", "PbsRouting",
]
