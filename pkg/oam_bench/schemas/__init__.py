from oam_bench.schemas.imperfections import ImperfectionParams, reference_imperfections
from oam_bench.schemas.circuits import TbsConfig, SagnacConfig
from oam_bench.schemas.sweeps import SweepSpec, SweepVariable
from oam_bench.schemas.metrics import MetricsReport
from oam_bench.schemas.scenario import Scenario, ScenarioConfig

__all__ = [
    "ImperfectionParams", "reference_imperfections",
    "TbsConfig", "SagnacConfig",
    "SweepSpec", "SweepVariable",
    "MetricsReport",
    "Scenario", "ScenarioConfig",
]
