import enum
import math
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, ValidationInfo, field_validator, model_validator

from oam_bench.config import get_settings
from oam_bench.models.devices import DeviceKind
from oam_bench.models.mode_space import Polarization
from oam_bench.schemas.circuits import SagnacConfig, TbsConfig
from oam_bench.schemas.imperfections import NUMERIC_FIELDS, ImperfectionParams
from oam_bench.schemas.sweeps import SweepSpec, SweepVariable
from oam_bench.utils.validation import (
    TBS_PORTS,
    validate_angle_deg,
    validate_extinction_db,
    validate_grid,
    validate_input_port,
    validate_oam_range,
    validate_phase_rad,
    validate_ports,
    validate_sr_th,
    validate_transmittance,
)


class Scenario(str, enum.Enum):
    TUNING = "tuning"
    POLARIZATION = "polarization"
    TOMOGRAPHY = "tomography"
    SAGNAC = "sagnac"
    DUMP = "dump"


# Default sweep grid (start, stop, step) per scenario
DEFAULT_GRIDS = {
    Scenario.TUNING: (0.0, 180.0, 0.1),
    Scenario.POLARIZATION: (0.0, 180.0, 0.1),
    Scenario.SAGNAC: (0.0, 90.0, 0.1),
    Scenario.TOMOGRAPHY: (0.0, 0.0, 1.0),
    Scenario.DUMP: (0.0, 0.0, 1.0),
}

SWEEP_VARIABLES = {
    Scenario.TUNING: SweepVariable.HWP2_THETA,
    Scenario.POLARIZATION: SweepVariable.HWP0_THETA,
    Scenario.SAGNAC: SweepVariable.HWP0_THETA,
    Scenario.TOMOGRAPHY: SweepVariable.PREPARED_L,
    Scenario.DUMP: SweepVariable.HWP2_THETA,
}

# Section each plain key belongs to, in serialization order
SECTION_KEYS: Dict[str, Tuple[str, ...]] = {
    "scenario": ("scenario", "seed", "device", "input_port", "input_pol"),
    "space": ("oam_range", "ports"),
    "tbs": ("theta2", "theta1", "theta3", "place_hwp1", "hwp1_port", "sr_th"),
    "sagnac": ("loop_phase", "mirror1_phase", "mirror2_phase", "theta2_step"),
    "imperfections": (
        "pbs_extinction_db",
        "hwp_angle_error_deg",
        "hwp_retardance_error_rad",
        "coating_phase_rad",
        "slm_crosstalk_db",
        "slm_crosstalk_reach",
        "mirror_pol_phase_rad",
        "detector_noise",
    ),
    "sweep": ("start", "stop", "step", "repeats", "imperfection", "variable"),
    "output": ("output_dir",),
    "circuit": (),
}

KEY_SECTION: Dict[str, str] = {key: section for section, keys in SECTION_KEYS.items() for key in keys}


class ScenarioConfig(BaseModel):
    scenario: Scenario = Scenario.TUNING
    seed: Optional[int] = None
    device: DeviceKind = DeviceKind.TBS
    input_port: int = 1
    input_pol: Polarization = Polarization.H

    oam_range: int = Field(default_factory=lambda: get_settings().oam_range)
    ports: Tuple[int, ...] = TBS_PORTS

    theta2: float = 22.5
    theta1: float = 45.0
    theta3: float = 45.0
    place_hwp1: bool = False
    hwp1_port: int = Field(2, ge=1, le=2)
    sr_th: Tuple[float, ...] = (0.5, 0.4, 0.3, 0.2, 0.1)

    loop_phase: float = 0.0
    mirror1_phase: float = 0.0
    mirror2_phase: float = 0.0
    theta2_step: float = Field(0.1, gt=0, le=45)

    pbs_extinction_db: float = math.inf
    hwp_angle_error_deg: float = 0.0
    hwp_retardance_error_rad: float = 0.0
    coating_phase_rad: float = math.pi
    slm_crosstalk_db: float = math.inf
    slm_crosstalk_reach: int = Field(1, ge=1, le=8)
    mirror_pol_phase_rad: float = 0.0
    detector_noise: float = Field(0.0, ge=0)
    port_loss: Dict[Tuple[int, Polarization], float] = Field(default_factory=dict)
    imp_sigma: Dict[str, float] = Field(default_factory=dict)

    start: Optional[float] = None
    stop: Optional[float] = None
    step: Optional[float] = None
    repeats: Optional[int] = Field(None, ge=1)
    # Imperfection field run over the grid when variable = imperfection
    imperfection: Optional[str] = None
    variable: Optional[SweepVariable] = None

    output_dir: Optional[str] = None
    circuit: List[str] = Field(default_factory=list)

    class Config:
        extra = "forbid"

    @field_validator("input_port")
    @classmethod
    def validate_input_port_field(cls, v: int) -> int:
        return validate_input_port(v)

    @field_validator("oam_range")
    @classmethod
    def validate_oam_range_field(cls, v: int) -> int:
        return validate_oam_range(v)

    @field_validator("ports")
    @classmethod
    def validate_ports_field(cls, v: Tuple[int, ...]) -> Tuple[int, ...]:
        return validate_ports(v)

    @field_validator("theta2", "theta1", "theta3", "hwp_angle_error_deg")
    @classmethod
    def validate_angle_field(cls, v: float) -> float:
        return validate_angle_deg(v)

    @field_validator(
        "loop_phase", "mirror1_phase", "mirror2_phase",
        "hwp_retardance_error_rad", "coating_phase_rad", "mirror_pol_phase_rad",
    )
    @classmethod
    def validate_phase_field(cls, v: float) -> float:
        return validate_phase_rad(v)

    @field_validator("pbs_extinction_db", "slm_crosstalk_db")
    @classmethod
    def validate_extinction_field(cls, v: float) -> float:
        return validate_extinction_db(v)

    @field_validator("sr_th")
    @classmethod
    def validate_sr_th_field(cls, v: Tuple[float, ...]) -> Tuple[float, ...]:
        if not v:
            raise ValueError("at least one splitting ratio is required")
        return tuple(validate_sr_th(x) for x in v)

    @field_validator("port_loss")
    @classmethod
    def validate_port_loss_field(cls, v: Dict[Tuple[int, Polarization], float]) -> Dict[Tuple[int, Polarization], float]:
        for transmittance in v.values():
            validate_transmittance(transmittance)
        return v

    @field_validator("imp_sigma")
    @classmethod
    def validate_imp_sigma_field(cls, v: Dict[str, float]) -> Dict[str, float]:
        for name in v:
            if name not in NUMERIC_FIELDS:
                raise ValueError(f"no imperfection field named {name!r}")
        return v

    @field_validator("imperfection")
    @classmethod
    def validate_imperfection_field(cls, v: Optional[str]) -> Optional[str]:
        if v is not None and v not in NUMERIC_FIELDS:
            raise ValueError(f"no imperfection field named {v!r}")
        return v

    @field_validator("variable")
    @classmethod
    def validate_variable_field(cls, v: Optional[SweepVariable], info: ValidationInfo) -> Optional[SweepVariable]:
        scenario = info.data.get("scenario", Scenario.TUNING)
        if v is None or v == SWEEP_VARIABLES[scenario]:
            return v
        if v != SweepVariable.IMPERFECTION or scenario != Scenario.POLARIZATION:
            raise ValueError(f"{v.value} sweeps do not apply to the {scenario.value} scenario")
        if info.data.get("imperfection") is None:
            raise ValueError("imperfection sweeps need an imperfection key")
        if any(info.data.get(key) is None for key in ("start", "stop", "step")):
            raise ValueError("imperfection sweeps need start, stop and step")
        return v

    @model_validator(mode="after")
    def validate_grid_bounds(self) -> "ScenarioConfig":
        validate_grid(*self.grid_bounds())
        return self

    def imperfections(self) -> ImperfectionParams:
        return ImperfectionParams(
            pbs_extinction_db=self.pbs_extinction_db,
            hwp_angle_error_deg=self.hwp_angle_error_deg,
            hwp_retardance_error_rad=self.hwp_retardance_error_rad,
            coating_phase_rad=self.coating_phase_rad,
            port_loss=dict(self.port_loss),
            slm_crosstalk_db=self.slm_crosstalk_db,
            slm_crosstalk_reach=self.slm_crosstalk_reach,
            mirror_pol_phase_rad=self.mirror_pol_phase_rad,
            detector_noise=self.detector_noise,
        )

    def tbs_config(self) -> TbsConfig:
        return TbsConfig(
            theta2_deg=self.theta2,
            theta1_deg=self.theta1,
            theta3_deg=self.theta3,
            place_hwp1=self.place_hwp1,
            hwp1_port=self.hwp1_port,
            imp=self.imperfections(),
        )

    def sagnac_config(self) -> SagnacConfig:
        return SagnacConfig(
            tbs=self.tbs_config(),
            loop_phase_rad=self.loop_phase,
            mirror1_phase_rad=self.mirror1_phase,
            mirror2_phase_rad=self.mirror2_phase,
        )

    def grid_bounds(self) -> Tuple[float, float, float]:
        start, stop, step = DEFAULT_GRIDS[self.scenario]
        return (
            start if self.start is None else self.start,
            stop if self.stop is None else self.stop,
            step if self.step is None else self.step,
        )

    def resolved_repeats(self) -> int:
        """Explicit repeats, else the configured Monte-Carlo count when anything is random."""
        if self.repeats is not None:
            return self.repeats
        random = any(s > 0 for s in self.imp_sigma.values()) or self.detector_noise > 0
        return get_settings().mc_repeats if random else 1

    def sweep_spec(self) -> SweepSpec:
        start, stop, step = self.grid_bounds()
        return SweepSpec(
            variable=self.variable or SWEEP_VARIABLES[self.scenario],
            start=start,
            stop=stop,
            step=step,
            repeats=self.resolved_repeats(),
            imp=self.imperfections(),
            imp_sigma=dict(self.imp_sigma),
            seed=self.seed,
        )

    def resolved(self) -> "ScenarioConfig":
        """Copy with the scenario's default grid and output directory filled in."""
        start, stop, step = self.grid_bounds()
        output_dir = self.output_dir or get_settings().output_dir
        return self.model_copy(update={
            "start": start,
            "stop": stop,
            "step": step,
            "repeats": self.resolved_repeats(),
            "output_dir": output_dir,
        })
