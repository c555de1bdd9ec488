import math
from typing import Dict, Tuple

from pydantic import BaseModel, Field, field_validator

from oam_bench.models.mode_space import Polarization
from oam_bench.utils.validation import (
    validate_angle_deg,
    validate_extinction_db,
    validate_phase_rad,
    validate_transmittance,
)

# Imperfection fields that Monte-Carlo sweeps may perturb
NUMERIC_FIELDS = (
    "pbs_extinction_db",
    "hwp_angle_error_deg",
    "hwp_retardance_error_rad",
    "coating_phase_rad",
    "slm_crosstalk_db",
    "mirror_pol_phase_rad",
)


def db_to_amplitude(db: float) -> float:
    """Leak amplitude sqrt(10^(-db/10)) for a power ratio in dB; 0 when ideal."""
    if math.isinf(db):
        return 0.0
    return math.sqrt(10 ** (-db / 10))


class ImperfectionParams(BaseModel):
    pbs_extinction_db: float = math.inf
    hwp_angle_error_deg: float = 0.0
    hwp_retardance_error_rad: float = 0.0
    coating_phase_rad: float = math.pi
    port_loss: Dict[Tuple[int, Polarization], float] = Field(default_factory=dict)
    slm_crosstalk_db: float = math.inf
    slm_crosstalk_reach: int = Field(1, ge=1, le=8)
    mirror_pol_phase_rad: float = 0.0
    detector_noise: float = Field(0.0, ge=0)

    class Config:
        extra = "forbid"

    @field_validator("pbs_extinction_db", "slm_crosstalk_db")
    @classmethod
    def validate_extinction_field(cls, v: float) -> float:
        return validate_extinction_db(v)

    @field_validator("hwp_angle_error_deg")
    @classmethod
    def validate_angle_field(cls, v: float) -> float:
        return validate_angle_deg(v)

    @field_validator("hwp_retardance_error_rad", "coating_phase_rad", "mirror_pol_phase_rad")
    @classmethod
    def validate_phase_field(cls, v: float) -> float:
        return validate_phase_rad(v)

    @field_validator("port_loss")
    @classmethod
    def validate_port_loss_field(cls, v: Dict[Tuple[int, Polarization], float]) -> Dict[Tuple[int, Polarization], float]:
        for (port, _pol), transmittance in v.items():
            if port < 1:
                raise ValueError(f"loss port {port} must be a positive port label")
            validate_transmittance(transmittance)
        return v

    @property
    def pbs_leak(self) -> float:
        return db_to_amplitude(self.pbs_extinction_db)

    @property
    def slm_leak(self) -> float:
        return db_to_amplitude(self.slm_crosstalk_db)

    def transmittance(self, port: int, pol: Polarization) -> float:
        return self.port_loss.get((port, Polarization(pol)), 1.0)

    @property
    def is_ideal(self) -> bool:
        return (
            math.isinf(self.pbs_extinction_db)
            and self.hwp_angle_error_deg == 0
            and self.hwp_retardance_error_rad == 0
            and all(t == 1.0 for t in self.port_loss.values())
            and math.isinf(self.slm_crosstalk_db)
            and self.mirror_pol_phase_rad == 0
        )


def reference_imperfections() -> ImperfectionParams:
    """Reference bench: 25 dB PBS extinction, Port 6 transmitting 98 % of both polarizations."""
    return ImperfectionParams(
        pbs_extinction_db=25.0,
        port_loss={(6, Polarization.H): 0.98, (6, Polarization.V): 0.98},
    )
