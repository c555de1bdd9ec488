import logging
import math
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from oam_bench.config import get_settings
from oam_bench.exceptions import DomainError
from oam_bench.utils.validation import validate_sr_th

logger = logging.getLogger(__name__)

# Bench measurements kept for comparison only; simulations are never pinned to them
EXPERIMENT_ER_DB = {"mean": 34.0, "min": 30.7, "max": 40.1}
# sr_th -> (PD, standard deviation), per input port
EXPERIMENT_PD_TABLE: Dict[int, Dict[float, Tuple[float, float]]] = {
    1: {0.5: (0.0173, 0.0006), 0.4: (0.0200, 0.0010), 0.3: (0.0263, 0.0010), 0.2: (0.0368, 0.0019), 0.1: (0.0575, 0.0015)},
    2: {0.5: (0.0200, 0.0007), 0.4: (0.0242, 0.0014), 0.3: (0.0288, 0.0010), 0.2: (0.0369, 0.0021), 0.1: (0.0535, 0.0014)},
}
EXPERIMENT_VISIBILITY_FLOOR = 0.99
EXPERIMENT_VISIBILITY_3SIGMA = 0.002
EXPERIMENT_ER_OAM_FLOOR_DB = 20.0


def _floor(eps_floor: Optional[float]) -> float:
    return get_settings().eps_floor if eps_floor is None else eps_floor


def _check_nonnegative(**values: float) -> None:
    for name, value in values.items():
        if value is None or math.isnan(value):
            raise DomainError(f"{name} must be a number")
        if value < 0:
            raise DomainError(f"{name} must be >= 0, got {value}")


class MetricsService:
    @staticmethod
    def guard_hit(denominator: float, eps_floor: Optional[float] = None) -> bool:
        """True when a denominator was clamped to the numeric floor."""
        return denominator < _floor(eps_floor)

    @staticmethod
    def extinction_ratio(i_max: float, i_min: float, eps_floor: Optional[float] = None) -> float:
        """10 log10(I_max / I_min) in dB with I_min clamped to the floor."""
        _check_nonnegative(i_max=i_max, i_min=i_min)
        if i_max < i_min:
            raise DomainError(f"i_max ({i_max}) is below i_min ({i_min})")
        if i_max == 0:
            raise DomainError("extinction ratio of a dark port is undefined")
        floor = _floor(eps_floor)
        if i_min < floor:
            logger.debug(f"Extinction ratio guard hit: i_min={i_min:.3g} < {floor:g}")
        return 10 * math.log10(i_max / max(i_min, floor))

    @staticmethod
    def splitting_ratio(reflected: float, transmitted: float) -> float:
        _check_nonnegative(reflected=reflected, transmitted=transmitted)
        total = reflected + transmitted
        if total <= 0:
            raise DomainError("splitting ratio needs some output intensity")
        return reflected / total

    @staticmethod
    def polarization_dependence(sr_samples: Iterable[float], sr_th: float) -> float:
        """Worst-case relative deviation of the measured splitting ratio from sr_th."""
        samples = np.asarray(list(sr_samples), dtype=float)
        if samples.size == 0:
            raise DomainError("polarization dependence needs at least one sample")
        try:
            sr_th = validate_sr_th(sr_th)
        except ValueError as e:
            raise DomainError(str(e))
        if np.any(samples < 0) or np.any(samples > 1) or np.any(np.isnan(samples)):
            raise DomainError("splitting ratio samples must lie in [0, 1]")
        return float(np.max(np.abs(samples - sr_th)) / sr_th)

    @staticmethod
    def er_oam(crosstalk_matrix, i: int, eps_floor: Optional[float] = None) -> float:
        """10 log10(I_i / sum of the other entries of row i); -inf when the prepared mode is dark."""
        matrix = np.asarray(crosstalk_matrix, dtype=float)
        if matrix.ndim != 2 or not 0 <= i < matrix.shape[0]:
            raise DomainError(f"row {i} not in a matrix of shape {matrix.shape}")
        row = matrix[i]
        if np.any(row < 0) or np.any(np.isnan(row)):
            raise DomainError(f"row {i} has negative intensities")
        if row[i] == 0:
            logger.debug(f"Row {i} has no intensity in its own mode")
            return -math.inf
        off_diagonal = float(np.sum(row) - row[i])
        return 10 * math.log10(row[i] / max(off_diagonal, _floor(eps_floor)))

    @staticmethod
    def er_oam_rows(crosstalk_matrix, eps_floor: Optional[float] = None) -> Tuple[Tuple[float, bool], ...]:
        """(ER_OAM, guard hit) for every row."""
        matrix = np.asarray(crosstalk_matrix, dtype=float)
        results = []
        for i in range(matrix.shape[0]):
            off_diagonal = float(np.sum(matrix[i]) - matrix[i, i])
            results.append((
                MetricsService.er_oam(matrix, i, eps_floor),
                MetricsService.guard_hit(off_diagonal, eps_floor),
            ))
        return tuple(results)

    @staticmethod
    def visibility(i_max: float, i_min: float) -> float:
        _check_nonnegative(i_max=i_max, i_min=i_min)
        if i_max < i_min:
            raise DomainError(f"i_max ({i_max}) is below i_min ({i_min})")
        if i_max + i_min == 0:
            return 0.0
        return (i_max - i_min) / (i_max + i_min)

    @staticmethod
    def tuning_extinction_summary(curves: Iterable[Sequence[float]], eps_floor: Optional[float] = None) -> Dict[str, float]:
        """Mean, min and max extinction ratio over several tuning curves."""
        ers = []
        guard = False
        for curve in curves:
            values = np.asarray(curve, dtype=float)
            i_max, i_min = float(values.max()), float(max(values.min(), 0.0))
            ers.append(MetricsService.extinction_ratio(i_max, i_min, eps_floor))
            guard = guard or MetricsService.guard_hit(i_min, eps_floor)
        if not ers:
            raise DomainError("no tuning curves given")
        return {
            "mean": float(np.mean(ers)),
            "min": float(np.min(ers)),
            "max": float(np.max(ers)),
            "guard_hit": guard,
        }

    @staticmethod
    def order_of_magnitude_match(simulated: float, reference: float) -> bool:
        """Within a factor of ten of the reference value."""
        if simulated <= 0 or reference <= 0:
            return False
        return abs(math.log10(simulated / reference)) < 1


extinction_ratio = MetricsService.extinction_ratio
splitting_ratio = MetricsService.splitting_ratio
polarization_dependence = MetricsService.polarization_dependence
er_oam = MetricsService.er_oam
visibility = MetricsService.visibility
