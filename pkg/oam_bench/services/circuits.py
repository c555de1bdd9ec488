import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from oam_bench.exceptions import RoutingError
from oam_bench.models.devices import PBS1_ROUTING, PBS2_ROUTING, CoatingSide, DeviceKind
from oam_bench.models.mode_space import (
    POLARIZATIONS,
    FieldState,
    ModeIndex,
    ModeSpace,
    Polarization,
    ScatteringOperator,
    apply,
    compose,
    compose_all,
    flatten,
    port_intensity,
)
from oam_bench.schemas.circuits import SagnacConfig, TbsConfig
from oam_bench.services.elements import (
    default_space,
    make_cubic_pbs,
    make_hwp,
    make_mirror,
    make_modified_pbs,
    make_oam_shifter,
    make_port_loss,
    make_port_swap,
)
from oam_bench.utils.validation import validate_input_port, validate_tbs_ports

logger = logging.getLogger(__name__)

AMPLITUDE_TOL = 1e-12


def _require_tbs_ports(space: ModeSpace) -> None:
    try:
        validate_tbs_ports(space.ports)
    except ValueError as e:
        raise RoutingError(str(e))


def tbs_port_map(input_port: int) -> Tuple[int, int]:
    """(transmitted, reflected) output ports for light entering ``input_port``.

    The transmitted arm carries cos^2(2 theta2), the reflected arm sin^2(2 theta2).
    """
    validate_input_port(input_port)
    return (5, 6) if input_port == 1 else (6, 5)


def tbs_stage_groups(
    cfg: TbsConfig, space: Optional[ModeSpace] = None
) -> Tuple[List[ScatteringOperator], ScatteringOperator, List[ScatteringOperator]]:
    """(elements before HWP_II, HWP_II, elements after HWP_II) in propagation order."""
    space = space or default_space()
    _require_tbs_ports(space)
    imp = cfg.imp

    before = [make_port_loss(imp, ports=(1, 2), space=space)]
    if cfg.place_hwp1:
        before.append(make_hwp(cfg.theta1_deg, [cfg.hwp1_port], imp, space))
    before += [
        make_modified_pbs(CoatingSide.RIGHT, PBS1_ROUTING, imp, space),
        make_port_loss(imp, ports=(3, 4), space=space),
    ]
    after = [
        make_modified_pbs(CoatingSide.LEFT, PBS2_ROUTING, imp, space),
        # identity on Port 5, HWP_III on Port 6
        make_hwp(cfg.theta3_deg, [6], imp, space),
        make_port_loss(imp, ports=(5, 6), space=space),
    ]
    return before, make_hwp(cfg.theta2_deg, [3, 4], imp, space), after


def tbs_stages(cfg: TbsConfig, space: Optional[ModeSpace] = None) -> List[ScatteringOperator]:
    """TBS elements in propagation order."""
    before, hwp2, after = tbs_stage_groups(cfg, space)
    return before + [hwp2] + after


def build_tbs(cfg: TbsConfig, space: Optional[ModeSpace] = None) -> ScatteringOperator:
    op = compose_all(tbs_stages(cfg, space))
    return ScatteringOperator(
        space=op.space,
        matrix=op.matrix,
        input_ports=op.input_ports,
        output_ports=op.output_ports,
        label=f"TBS(theta2={cfg.theta2_deg:g}deg)",
        unitary=op.unitary,
    )


def closed_form_tbs(theta2_deg: float, space: Optional[ModeSpace] = None) -> ScatteringOperator:
    """The printed Port-1 operator of the ideal TBS, taken literally.

    c|h,5><h,1| + s|h,6><h,1| - c|v,5><v,1| + s|v,6><v,1| for every l,
    with c = cos(2 theta2) and s = sin(2 theta2).
    """
    space = space or default_space()
    for port in (1, 5, 6):
        if not space.has_port(port):
            raise RoutingError(f"closed-form TBS needs port {port}")

    theta = math.radians(2 * theta2_deg)
    c, s = math.cos(theta), math.sin(theta)
    entries = {
        (5, Polarization.H, Polarization.H): c,
        (6, Polarization.H, Polarization.H): s,
        (5, Polarization.V, Polarization.V): -c,
        (6, Polarization.V, Polarization.V): s,
    }

    matrix = np.zeros((space.dimension, space.dimension), dtype=complex)
    for (port_out, pol_out, pol_in), value in entries.items():
        matrix[space.indices(port=port_out, pol=pol_out), space.indices(port=1, pol=pol_in)] = value

    return ScatteringOperator(
        space=space,
        matrix=matrix,
        input_ports=frozenset({1}),
        output_ports=frozenset({5, 6}),
        label=f"closed-form TBS(theta2={theta2_deg:g}deg)",
        unitary=True,
    )


@dataclass
class SignEntry:
    out_mode: str
    in_mode: str
    composed: complex
    closed_form: complex

    @property
    def differs(self) -> bool:
        return abs(self.composed - self.closed_form) > AMPLITUDE_TOL


@dataclass
class SignFinding:
    theta2_deg: float
    entries: List[SignEntry] = field(default_factory=list)
    matches_output_law: bool = False
    matches_closed_form: bool = False
    intensities_agree: bool = False

    @property
    def differing(self) -> List[SignEntry]:
        return [e for e in self.entries if e.differs]

    @property
    def conclusion(self) -> str:
        if self.matches_closed_form:
            return "composition matches the closed-form operator"
        if self.matches_output_law:
            cells = ", ".join(f"|{e.out_mode}><{e.in_mode}|" for e in self.differing)
            return f"composition matches the output law (no relative sign); closed form differs on {cells}"
        return "composition matches neither printed form"


def _mode_name(m: ModeIndex) -> str:
    return f"{m.pol.value.lower()},{m.port}"


def sign_finding(theta2_deg: float = 22.5, space: Optional[ModeSpace] = None) -> SignFinding:
    """Amplitude-level comparison of the composed ideal TBS against the closed form."""
    space = space or default_space()
    composed = build_tbs(TbsConfig(theta2_deg=theta2_deg), space)
    closed = closed_form_tbs(theta2_deg, space)
    finding = SignFinding(theta2_deg=theta2_deg)

    for pol_in in POLARIZATIONS:
        m_in = ModeIndex(1, pol_in, 0)
        col = flatten(space, m_in)
        for port_out in (5, 6):
            for pol_out in POLARIZATIONS:
                m_out = ModeIndex(port_out, pol_out, 0)
                row = flatten(space, m_out)
                finding.entries.append(SignEntry(
                    out_mode=_mode_name(m_out),
                    in_mode=_mode_name(m_in),
                    composed=complex(composed.matrix[row, col]),
                    closed_form=complex(closed.matrix[row, col]),
                ))

    theta = math.radians(2 * theta2_deg)
    c, s = math.cos(theta), math.sin(theta)
    eye = np.eye(2 * space.n_oam)
    finding.matches_output_law = bool(
        np.allclose(composed.block(5, 1), c * eye, atol=AMPLITUDE_TOL)
        and np.allclose(composed.block(6, 1), s * eye, atol=AMPLITUDE_TOL)
    )
    finding.matches_closed_form = bool(
        np.allclose(composed.matrix[:, space.port_slices[1]], closed.matrix[:, space.port_slices[1]], atol=AMPLITUDE_TOL)
    )

    # per-port intensity of every Port-1 column
    agree = True
    for port_out in (5, 6):
        a = np.sum(np.abs(composed.block(port_out, 1)) ** 2, axis=0)
        b = np.sum(np.abs(closed.block(port_out, 1)) ** 2, axis=0)
        agree = agree and bool(np.allclose(a, b, atol=AMPLITUDE_TOL))
    finding.intensities_agree = agree

    logger.info(f"Sign finding at theta2={theta2_deg:g}deg: {finding.conclusion}")
    return finding


def loop_operator(cfg: SagnacConfig, space: ModeSpace) -> ScatteringOperator:
    """Path 5 -> M1 -> M2 -> 6 and its reverse 6 -> M2 -> M1 -> 5."""
    imp = cfg.tbs.imp
    mirrors = compose(
        make_mirror(5, cfg.mirror1_phase_rad, imp, space),
        make_mirror(6, cfg.mirror2_phase_rad, imp, space),
    )
    swap = make_port_swap(5, 6, cfg.loop_phase_rad, space)
    return compose_all([mirrors, swap, mirrors])


def build_sagnac(cfg: SagnacConfig, space: Optional[ModeSpace] = None) -> ScatteringOperator:
    """Forward TBS, the mirror loop, then the reverse (transposed) TBS back to Ports 1 and 2."""
    space = space or default_space()
    forward = build_tbs(cfg.tbs, space)
    op = compose_all([forward, loop_operator(cfg, space), forward.transpose()])
    return ScatteringOperator(
        space=space,
        matrix=op.matrix,
        input_ports=op.input_ports,
        output_ports=op.output_ports,
        label=f"Sagnac(theta2={cfg.tbs.theta2_deg:g}deg, loop={cfg.loop_phase_rad:g})",
        unitary=op.unitary,
    )


def build_device(
    kind: DeviceKind,
    cfg: Optional[TbsConfig] = None,
    space: Optional[ModeSpace] = None,
) -> Tuple[Optional[ScatteringOperator], Tuple[int, ...]]:
    """Device under test for tomography and the ports its detectors look at."""
    space = space or default_space()
    cfg = cfg or TbsConfig()
    kind = DeviceKind(kind)

    if kind == DeviceKind.NONE:
        return None, (1,)
    if kind == DeviceKind.PBS:
        return make_modified_pbs(CoatingSide.RIGHT, PBS1_ROUTING, cfg.imp, space), PBS1_ROUTING.outputs
    if kind == DeviceKind.CUBIC_PBS:
        return make_cubic_pbs(PBS1_ROUTING, cfg.imp, space), PBS1_ROUTING.outputs
    return build_tbs(cfg, space), (5, 6)


def _prepared_state(space: ModeSpace, l_prepare: int, device: Optional[ScatteringOperator],
                    input_pol: Polarization, input_port: int) -> FieldState:
    state = FieldState.basis_state(space, input_port, input_pol, l_prepare)
    return apply(device, state) if device is not None else state


def run_tomography(
    l_prepare: int,
    l_measure: int,
    device: Optional[ScatteringOperator] = None,
    crosstalk_db: float = math.inf,
    space: Optional[ModeSpace] = None,
    input_pol: Polarization = Polarization.H,
    input_port: int = 1,
    detector_ports: Optional[Sequence[int]] = None,
    reach: int = 1,
) -> float:
    """Intensity coupled into the single-mode fiber when l_prepare is demodulated with -l_measure.

    Summed over polarizations and detector ports; with no device the detector
    sits on the input port.
    """
    space = space or (device.space if device is not None else default_space())
    for l in (l_prepare, l_measure):
        if abs(l) > space.oam_range:
            raise IndexError(f"OAM charge {l} outside truncation |l| <= {space.oam_range}")

    state = _prepared_state(space, l_prepare, device, input_pol, input_port)
    if detector_ports is None:
        detector_ports = sorted(device.output_ports) if device is not None else (input_port,)

    total = 0.0
    for port in detector_ports:
        shifter = make_oam_shifter(-l_measure, crosstalk_db, port, space, reach)
        demodulated = apply(shifter, state)
        total += sum(abs(demodulated.amplitude(port, pol, 0)) ** 2 for pol in POLARIZATIONS)
    return total


def tomography_boundary_leakage(
    l_prepare: int,
    device: Optional[ScatteringOperator] = None,
    crosstalk_db: float = math.inf,
    space: Optional[ModeSpace] = None,
    input_pol: Polarization = Polarization.H,
    input_port: int = 1,
) -> float:
    """First-order estimate of intensity crosstalk would push past |l| = L.

    Population on the truncation boundary times the neighbor coupling eps^2.
    """
    space = space or (device.space if device is not None else default_space())
    state = _prepared_state(space, l_prepare, device, input_pol, input_port)
    distribution = state.oam_distribution()
    boundary = distribution[-space.oam_range] + (distribution[space.oam_range] if space.oam_range else 0.0)
    eps2 = 0.0 if math.isinf(crosstalk_db) else 10 ** (-crosstalk_db / 10)
    return boundary * eps2


def output_intensities(op: ScatteringOperator, state: FieldState, ports: Sequence[int]) -> Tuple[float, ...]:
    out = apply(op, state)
    return tuple(port_intensity(out, p) for p in ports)
