"""Grid and Monte-Carlo drivers for the tuning, polarization, tomography and Sagnac benches.

Grid points are independent: they are evaluated through a thread pool sized by
``settings.workers`` and merged back in grid order, so results never depend on
the worker count. Angle sweeps precompute the parts of a circuit that do not
depend on the swept plate and apply only the plate per point.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from oam_bench.config import get_settings
from oam_bench.exceptions import DomainError
from oam_bench.models.devices import DeviceKind
from oam_bench.models.mode_space import (
    FieldState,
    ModeSpace,
    Polarization,
    ScatteringOperator,
    compose_all,
)
from oam_bench.schemas.circuits import SagnacConfig, TbsConfig
from oam_bench.schemas.imperfections import NUMERIC_FIELDS, ImperfectionParams
from oam_bench.schemas.sweeps import SweepSpec, SweepVariable
from oam_bench.services.circuits import (
    build_device,
    build_tbs,
    loop_operator,
    run_tomography,
    tbs_port_map,
    tbs_stage_groups,
    tomography_boundary_leakage,
)
from oam_bench.services.elements import default_space, make_hwp, prepare_linear_state
from oam_bench.services.metrics import MetricsService
from oam_bench.utils.validation import validate_input_port, validate_sr_th

logger = logging.getLogger(__name__)

ZERO_TOL = 1e-12


def _map_ordered(fn: Callable, items: Sequence, workers: Optional[int] = None) -> List:
    """Evaluate fn over items, concurrently when workers > 1, results in item order."""
    workers = get_settings().workers if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, items))


def grid(spec: SweepSpec) -> np.ndarray:
    """start, start + step, ... up to stop inclusive when stop lies on the grid."""
    n = int(math.floor((spec.stop - spec.start) / spec.step + 1e-9)) + 1
    return np.round(spec.start + spec.step * np.arange(n), 10)


def _port_intensities(amplitudes: np.ndarray, space: ModeSpace, ports: Sequence[int]) -> np.ndarray:
    """Per-port intensity of column state vectors: (dimension, n) -> (n, len(ports))."""
    return np.stack(
        [np.sum(np.abs(amplitudes[space.port_slices[p]]) ** 2, axis=0) for p in ports],
        axis=-1,
    )


def random_polarization_states(
    n: int,
    seed: Optional[int] = None,
    input_port: int = 1,
    l: int = 0,
    space: Optional[ModeSpace] = None,
) -> List[FieldState]:
    """n unit-intensity states alpha|h,l> + beta|v,l> with random complex (alpha, beta)."""
    space = space or default_space()
    rng = np.random.default_rng(seed)
    raw = rng.normal(size=(n, 2)) + 1j * rng.normal(size=(n, 2))
    raw /= np.linalg.norm(raw, axis=1, keepdims=True)
    return [FieldState.from_jones(space, input_port, tuple(v), l) for v in raw]


def sweep_tuning_batch(
    spec: SweepSpec,
    tbs_cfg: TbsConfig,
    states: Sequence[FieldState],
    ports: Sequence[int] = (5, 6),
    space: Optional[ModeSpace] = None,
    workers: Optional[int] = None,
) -> np.ndarray:
    """Output intensities over the HWP_II grid for many input states at once.

    Returns an array of shape (grid points, states, ports).
    """
    if not states:
        raise DomainError("no input states to sweep")
    space = space or states[0].space
    before, _, after = tbs_stage_groups(tbs_cfg, space)
    pre = compose_all(before).matrix
    post = compose_all(after).matrix

    inputs = pre @ np.stack([s.amplitudes for s in states], axis=1)
    thetas = grid(spec)
    imp = tbs_cfg.imp

    def evaluate(theta: float) -> np.ndarray:
        plate = make_hwp(theta, [3, 4], imp, space).matrix
        return _port_intensities(post @ (plate @ inputs), space, ports)

    logger.debug(f"Tuning sweep over {len(thetas)} angles x {len(states)} states")
    return np.stack(_map_ordered(evaluate, thetas, workers))


def sweep_tuning(
    spec: SweepSpec,
    tbs_cfg: TbsConfig,
    input_pol: Polarization = Polarization.H,
    input_port: int = 1,
    space: Optional[ModeSpace] = None,
    workers: Optional[int] = None,
) -> pd.DataFrame:
    """Columns theta2, i5, i6 for one basis input."""
    validate_input_port(input_port)
    space = space or default_space()
    state = FieldState.basis_state(space, input_port, input_pol, 0)
    intensities = sweep_tuning_batch(spec, tbs_cfg, [state], (5, 6), space, workers)[:, 0, :]
    return pd.DataFrame({"theta2": grid(spec), "i5": intensities[:, 0], "i6": intensities[:, 1]})


def fit_tuning_curve(theta_deg: Sequence[float], intensity: Sequence[float]) -> Dict[str, float]:
    """Least-squares fit of A cos^2(2 theta + phi) + C; phi in degrees, residual is the max error."""
    theta = np.radians(np.asarray(theta_deg, dtype=float))
    y = np.asarray(intensity, dtype=float)
    design = np.column_stack([np.ones_like(theta), np.cos(4 * theta), np.sin(4 * theta)])
    (offset, a, b), *_ = np.linalg.lstsq(design, y, rcond=None)

    half_amplitude = math.hypot(a, b)
    phi = 0.5 * math.atan2(-b, a)
    fitted = design @ np.array([offset, a, b])
    return {
        "A": 2 * half_amplitude,
        "phi_deg": math.degrees(phi),
        "C": offset - half_amplitude,
        "residual": float(np.max(np.abs(fitted - y))) if y.size else 0.0,
    }


def crossing_angles(theta: Sequence[float], i_a: Sequence[float], i_b: Sequence[float]) -> List[float]:
    """Angles where two curves cross, linearly interpolated between grid points."""
    theta = np.asarray(theta, dtype=float)
    d = np.asarray(i_a, dtype=float) - np.asarray(i_b, dtype=float)
    zero = np.abs(d) < ZERO_TOL

    crossings = []
    for k in range(len(d)):
        if zero[k]:
            crossings.append(float(theta[k]))
        elif k + 1 < len(d) and not zero[k + 1] and d[k] * d[k + 1] < 0:
            crossings.append(float(theta[k] - d[k] * (theta[k + 1] - theta[k]) / (d[k + 1] - d[k])))
    return crossings


def theta2_for_sr(sr_th: float) -> float:
    """HWP_II angle putting sin^2(2 theta2) = sr_th into the reflected arm."""
    return math.degrees(math.asin(math.sqrt(validate_sr_th(sr_th)))) / 2


@dataclass
class PolarizationSweep:
    table: pd.DataFrame
    pd: float
    sr_th: float
    theta2_deg: float
    input_port: int


def sweep_polarization(
    spec: SweepSpec,
    tbs_cfg: TbsConfig,
    sr_th: float,
    input_port: int = 1,
    space: Optional[ModeSpace] = None,
    rng: Optional[np.random.Generator] = None,
) -> PolarizationSweep:
    """Splitting ratio over the HWP_0 grid with HWP_II set for sr_th, plus its PD."""
    validate_input_port(input_port)
    space = space or default_space()
    theta2 = theta2_for_sr(sr_th)
    cfg = tbs_cfg.model_copy(update={"theta2_deg": theta2})
    op = build_tbs(cfg, space)
    transmitted, reflected = tbs_port_map(input_port)

    thetas = grid(spec)
    h = prepare_linear_state(0.0, input_port, 0, space).amplitudes
    v = prepare_linear_state(45.0, input_port, 0, space).amplitudes
    col_h, col_v = op.matrix @ h, op.matrix @ v

    angle = np.radians(2 * thetas)
    amplitudes = np.outer(col_h, np.cos(angle)) + np.outer(col_v, np.sin(angle))
    intensities = _port_intensities(amplitudes, space, (reflected, transmitted))

    noise = cfg.imp.detector_noise
    if noise > 0 and rng is not None:
        intensities = np.clip(intensities + rng.normal(0.0, noise, size=intensities.shape), 0.0, None)

    sr = intensities[:, 0] / intensities.sum(axis=1)
    table = pd.DataFrame({"theta0": thetas, "sr": sr})
    pd_value = MetricsService.polarization_dependence(sr, sr_th)
    logger.debug(f"PD at sr_th={sr_th:g} from Port {input_port}: {pd_value:.6g}")
    return PolarizationSweep(table=table, pd=pd_value, sr_th=sr_th, theta2_deg=theta2, input_port=input_port)


def draw_imperfections(
    base: ImperfectionParams,
    sigma: Dict[str, float],
    rng: np.random.Generator,
) -> ImperfectionParams:
    """One static draw: each listed field gets gaussian noise, held for a whole sweep."""
    update = {}
    for name in NUMERIC_FIELDS:
        s = sigma.get(name, 0.0)
        if s <= 0:
            continue
        value = getattr(base, name)
        if math.isinf(value):
            continue
        drawn = value + rng.normal(0.0, s)
        if name in ("pbs_extinction_db", "slm_crosstalk_db"):
            drawn = max(drawn, 0.0)
        update[name] = float(drawn)
    return base.model_copy(update=update)


@dataclass
class MonteCarloResult:
    values: np.ndarray
    seed: Optional[int]

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def std(self) -> float:
        return float(np.std(self.values, ddof=1)) if self.values.size > 1 else 0.0

    @property
    def three_sigma(self) -> float:
        return 3 * self.std


def _repeat_generators(seed: Optional[int], repeats: int) -> List[np.random.Generator]:
    return [np.random.default_rng(child) for child in np.random.SeedSequence(seed).spawn(repeats)]


def monte_carlo_polarization(
    spec: SweepSpec,
    tbs_cfg: TbsConfig,
    sr_th: float,
    input_port: int = 1,
    space: Optional[ModeSpace] = None,
    workers: Optional[int] = None,
) -> MonteCarloResult:
    """PD over spec.repeats imperfection draws; each repeat owns a child generator of spec.seed."""
    space = space or default_space()
    base = tbs_cfg.imp

    def one_repeat(rng: np.random.Generator) -> float:
        imp = draw_imperfections(base, spec.imp_sigma, rng)
        cfg = tbs_cfg.model_copy(update={"imp": imp})
        return sweep_polarization(spec, cfg, sr_th, input_port, space, rng).pd

    values = np.array(_map_ordered(one_repeat, _repeat_generators(spec.seed, spec.repeats), workers))
    result = MonteCarloResult(values=values, seed=spec.seed)
    logger.info(
        f"Monte-Carlo PD at sr_th={sr_th:g}: mean={result.mean:.6g}, 3sigma={result.three_sigma:.3g} "
        f"over {spec.repeats} repeats (seed={spec.seed})"
    )
    return result


def sweep_imperfection(
    spec: SweepSpec,
    name: str,
    tbs_cfg: TbsConfig,
    sr_th: float = 0.5,
    input_port: int = 1,
    space: Optional[ModeSpace] = None,
    workers: Optional[int] = None,
    theta0_step: float = 0.1,
) -> pd.DataFrame:
    """PD as one imperfection field runs over the grid; columns value, pd."""
    if name not in NUMERIC_FIELDS:
        raise DomainError(f"no imperfection field named {name!r}")
    space = space or default_space()
    inner = SweepSpec(variable=SweepVariable.HWP0_THETA, start=0.0, stop=180.0, step=theta0_step)
    values = grid(spec)

    def evaluate(value: float) -> float:
        try:
            imp = ImperfectionParams.model_validate({**tbs_cfg.imp.model_dump(), name: value})
        except ValidationError as e:
            raise DomainError(f"{name} = {value:g} is not a valid setting: {e.errors()[0]['msg']}")
        cfg = tbs_cfg.model_copy(update={"imp": imp})
        return sweep_polarization(inner, cfg, sr_th, input_port, space).pd

    return pd.DataFrame({"value": values, "pd": _map_ordered(evaluate, values, workers)})


@dataclass
class TomographyResult:
    matrix: pd.DataFrame
    er_oam_db: List[float]
    guard_hit: List[bool]
    boundary_leakage: List[float] = field(default_factory=list)

    @property
    def all_guarded(self) -> bool:
        return all(self.guard_hit)


def sweep_tomography(
    device: Union[DeviceKind, ScatteringOperator, None] = None,
    crosstalk_db: float = math.inf,
    tbs_cfg: Optional[TbsConfig] = None,
    space: Optional[ModeSpace] = None,
    input_pol: Polarization = Polarization.H,
    reach: int = 1,
) -> TomographyResult:
    """Crosstalk matrix over every prepared/measured charge pair, rows = prepared l."""
    space = space or default_space()
    if isinstance(device, ScatteringOperator):
        operator, detector_ports = device, tuple(sorted(device.output_ports))
    else:
        operator, detector_ports = build_device(device or DeviceKind.NONE, tbs_cfg, space)

    charges = list(space.oam_values)
    matrix = np.array([
        [
            run_tomography(lp, lm, operator, crosstalk_db, space, input_pol, 1, detector_ports, reach)
            for lm in charges
        ]
        for lp in charges
    ])

    rows = MetricsService.er_oam_rows(matrix)
    leakage = [tomography_boundary_leakage(lp, operator, crosstalk_db, space, input_pol) for lp in charges]
    if any(leak > 0 for leak in leakage):
        logger.warning(f"Crosstalk pushes up to {max(leakage):.3g} of the intensity past |l| = {space.oam_range}")

    return TomographyResult(
        matrix=pd.DataFrame(matrix, index=pd.Index(charges, name="l_prepare"), columns=charges),
        er_oam_db=[db for db, _ in rows],
        guard_hit=[hit for _, hit in rows],
        boundary_leakage=leakage,
    )


def sagnac_return_columns(
    cfg: SagnacConfig,
    thetas: Sequence[float],
    input_port: int,
    space: Optional[ModeSpace] = None,
    workers: Optional[int] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Amplitudes back at ``input_port`` for |h> and |v> inputs, one row per HWP_II angle.

    The loop operator sits between the forward TBS and its transpose, so only
    HWP_II is rebuilt per angle.
    """
    space = space or default_space()
    before, _, after = tbs_stage_groups(cfg.tbs, space)
    pre = compose_all(before).matrix
    post = compose_all(after).matrix
    kernel = post.T @ loop_operator(cfg, space).matrix @ post

    inputs = pre @ np.stack([
        prepare_linear_state(0.0, input_port, 0, space).amplitudes,
        prepare_linear_state(45.0, input_port, 0, space).amplitudes,
    ], axis=1)
    readout = pre.T[space.port_slices[input_port]]
    imp = cfg.tbs.imp

    def evaluate(theta: float) -> np.ndarray:
        plate = make_hwp(theta, [3, 4], imp, space).matrix
        return readout @ (plate.T @ (kernel @ (plate @ inputs)))

    columns = np.stack(_map_ordered(evaluate, list(thetas), workers))
    return columns[:, :, 0], columns[:, :, 1]


def sweep_sagnac(
    spec: SweepSpec,
    sagnac_cfg: SagnacConfig,
    space: Optional[ModeSpace] = None,
    theta2_step: float = 0.1,
    workers: Optional[int] = None,
) -> pd.DataFrame:
    """Visibility per HWP_0 angle for light entering and leaving at Port 1 and at Port 2.

    Each visibility comes from the extrema of a HWP_II sub-sweep over one
    device period, [0, 90) degrees.
    """
    space = space or default_space()
    thetas0 = grid(spec)
    thetas2 = np.round(np.arange(0.0, 90.0 - 1e-9, theta2_step), 10)
    angle = np.radians(2 * thetas0)
    rngs = _repeat_generators(spec.seed, 2)
    noise = sagnac_cfg.tbs.imp.detector_noise

    table = {"theta0": thetas0}
    for input_port, rng in zip((1, 2), rngs):
        col_h, col_v = sagnac_return_columns(sagnac_cfg, thetas2, input_port, space, workers)
        result = []
        for alpha, beta in zip(np.cos(angle), np.sin(angle)):
            intensity = np.sum(np.abs(alpha * col_h + beta * col_v) ** 2, axis=1)
            if noise > 0:
                intensity = np.clip(intensity + rng.normal(0.0, noise, size=intensity.shape), 0.0, None)
            result.append(MetricsService.visibility(float(intensity.max()), float(intensity.min())))
        table[f"v_port{input_port}"] = result

    return pd.DataFrame(table)
