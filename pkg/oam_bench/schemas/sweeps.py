import enum
from typing import Dict, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from oam_bench.schemas.imperfections import NUMERIC_FIELDS, ImperfectionParams
from oam_bench.utils.validation import validate_grid, validate_repeats, validate_sigma


class SweepVariable(str, enum.Enum):
    HWP2_THETA = "hwp2_theta"
    HWP0_THETA = "hwp0_theta"
    PREPARED_L = "prepared_l"
    IMPERFECTION = "imperfection"


class SweepSpec(BaseModel):
    variable: SweepVariable = SweepVariable.HWP2_THETA
    start: float = 0.0
    stop: float = 180.0
    step: float = 0.1
    repeats: int = 1
    imp: ImperfectionParams = Field(default_factory=ImperfectionParams)
    # Gaussian sigma per numeric imperfection field, drawn once per repeat
    imp_sigma: Dict[str, float] = Field(default_factory=dict)
    seed: Optional[int] = None

    @field_validator("repeats")
    @classmethod
    def validate_repeats_field(cls, v: int) -> int:
        return validate_repeats(v)

    @field_validator("imp_sigma")
    @classmethod
    def validate_imp_sigma_field(cls, v: Dict[str, float]) -> Dict[str, float]:
        for name, sigma in v.items():
            if name not in NUMERIC_FIELDS:
                raise ValueError(f"no imperfection field named {name!r}")
            validate_sigma(sigma)
        return v

    @model_validator(mode="after")
    def validate_grid_bounds(self) -> "SweepSpec":
        validate_grid(self.start, self.stop, self.step)
        return self

    @property
    def is_monte_carlo(self) -> bool:
        return self.repeats > 1 or any(s > 0 for s in self.imp_sigma.values()) or self.imp.detector_noise > 0
