from pydantic import BaseModel, Field, field_validator

from oam_bench.schemas.imperfections import ImperfectionParams
from oam_bench.utils.validation import validate_angle_deg, validate_phase_rad


class TbsConfig(BaseModel):
    theta2_deg: float = 22.5
    theta1_deg: float = 45.0
    theta3_deg: float = 45.0
    # HWP_I sits in one input arm; off by default
    place_hwp1: bool = False
    hwp1_port: int = Field(2, ge=1, le=2)
    imp: ImperfectionParams = Field(default_factory=ImperfectionParams)

    @field_validator("theta2_deg", "theta1_deg", "theta3_deg")
    @classmethod
    def validate_angle_field(cls, v: float) -> float:
        return validate_angle_deg(v)


class SagnacConfig(BaseModel):
    tbs: TbsConfig = Field(default_factory=TbsConfig)
    loop_phase_rad: float = 0.0
    mirror1_phase_rad: float = 0.0
    mirror2_phase_rad: float = 0.0

    @field_validator("loop_phase_rad", "mirror1_phase_rad", "mirror2_phase_rad")
    @classmethod
    def validate_phase_field(cls, v: float) -> float:
        return validate_phase_rad(v)
