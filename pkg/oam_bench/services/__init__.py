from oam_bench.services.metrics import MetricsService
from oam_bench.services.circuits import build_tbs, closed_form_tbs, build_sagnac, run_tomography, sign_finding
from oam_bench.services.sweeps import sweep_tuning, sweep_polarization, sweep_tomography, sweep_sagnac
from oam_bench.services.scenario import parse_config, serialize_config, run_scenario

__all__ = [
    "MetricsService",
    "build_tbs", "closed_form_tbs", "build_sagnac", "run_tomography", "sign_finding",
    "sweep_tuning", "sweep_polarization", "sweep_tomography", "sweep_sagnac",
    "parse_config", "serialize_config", "run_scenario",
]
