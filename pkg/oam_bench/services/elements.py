"""Factories for the optical elements of the TBS and its benches.

Every factory returns a ScatteringOperator on a given ModeSpace. Elements act
on their own ports and leave the rest of the space alone, except polarizing
splitters, whose columns outside their two input ports are zero.
"""
import logging
import math
import re
import shlex
from typing import Iterable, Optional, Tuple

import numpy as np
from scipy.linalg import expm

from oam_bench.config import get_settings
from oam_bench.exceptions import DomainError, RoutingError
from oam_bench.models.devices import CoatingSide, PbsRouting
from oam_bench.models.mode_space import (
    POLARIZATIONS,
    FieldState,
    ModeSpace,
    Polarization,
    ScatteringOperator,
    identity,
)
from oam_bench.schemas.imperfections import ImperfectionParams, db_to_amplitude
from oam_bench.utils.validation import TBS_PORTS

logger = logging.getLogger(__name__)


def default_space(oam_range: Optional[int] = None) -> ModeSpace:
    """Ports 1-6 with the configured OAM truncation."""
    if oam_range is None:
        oam_range = get_settings().oam_range
    return ModeSpace(ports=TBS_PORTS, oam_range=oam_range)


def _check_ports(space: ModeSpace, ports: Iterable[int], what: str) -> Tuple[int, ...]:
    ports = tuple(sorted(set(int(p) for p in ports)))
    missing = [p for p in ports if not space.has_port(p)]
    if missing:
        raise RoutingError(f"{what} acts on ports {missing} missing from the mode space {space.ports}")
    return ports


def _set_pol_block(matrix: np.ndarray, space: ModeSpace, out_port: int, in_port: int, block: np.ndarray) -> None:
    """Write a 2x2 polarization block, the same for every OAM charge."""
    for i, pol_out in enumerate(POLARIZATIONS):
        rows = space.indices(port=out_port, pol=pol_out)
        for j, pol_in in enumerate(POLARIZATIONS):
            cols = space.indices(port=in_port, pol=pol_in)
            matrix[rows, cols] = block[i, j]


def hwp_jones(theta_deg: float, retardance_error_rad: float = 0.0) -> np.ndarray:
    """Jones matrix of a half-wave plate with fast axis at theta.

    R(theta) . diag(1, -exp(i*delta)) . R(-theta); at delta = 0 this is
    [[cos2t, sin2t], [sin2t, -cos2t]].
    """
    theta = math.radians(theta_deg)
    c, s = math.cos(theta), math.sin(theta)
    rotation = np.array([[c, -s], [s, c]])
    retarder = np.diag([1.0, -np.exp(1j * retardance_error_rad)])
    return rotation @ retarder @ rotation.T


def make_identity(space: Optional[ModeSpace] = None) -> ScatteringOperator:
    return identity(space or default_space())


def make_hwp(
    theta_deg: float,
    acting_ports: Iterable[int],
    imp: Optional[ImperfectionParams] = None,
    space: Optional[ModeSpace] = None,
) -> ScatteringOperator:
    space = space or default_space()
    imp = imp or ImperfectionParams()
    ports = _check_ports(space, acting_ports, "HWP")

    theta = theta_deg + imp.hwp_angle_error_deg
    jones = hwp_jones(theta, imp.hwp_retardance_error_rad)

    matrix = np.eye(space.dimension, dtype=complex)
    for port in ports:
        _set_pol_block(matrix, space, port, port, jones)

    return ScatteringOperator(
        space=space,
        matrix=matrix,
        input_ports=frozenset(ports),
        output_ports=frozenset(ports),
        label=f"HWP({theta_deg:g}deg) on {list(ports)}",
        unitary=True,
    )


def make_modified_pbs(
    coating_side: CoatingSide,
    routing: PbsRouting,
    imp: Optional[ImperfectionParams] = None,
    space: Optional[ModeSpace] = None,
) -> ScatteringOperator:
    """Rhombic-prism PBS: every path reflects an even number of times, so l is kept.

    H crosses over (a -> y, b -> x) by two total internal reflections, V stays
    on its side (a -> x, b -> y). V entering from the coated prism picks up
    exp(i * coating_phase). A finite extinction leaks i*eps of the field into
    the other output port with the main path scaled to keep the element passive.
    """
    space = space or default_space()
    imp = imp or ImperfectionParams()
    if not isinstance(routing, PbsRouting):
        routing = PbsRouting(*routing)
    _check_ports(space, routing.inputs + routing.outputs, "PBS")

    a, b = routing.inputs
    x, y = routing.outputs
    coated = routing.coated_input(coating_side)

    eps = imp.pbs_leak
    main = 1 / math.sqrt(1 + eps ** 2)
    leak = 1j * eps * main
    coating = np.exp(1j * imp.coating_phase_rad)

    # (input port, polarization) -> (main output, leak output)
    paths = {
        (a, Polarization.H): (y, x),
        (b, Polarization.H): (x, y),
        (a, Polarization.V): (x, y),
        (b, Polarization.V): (y, x),
    }

    matrix = np.zeros((space.dimension, space.dimension), dtype=complex)
    for (port_in, pol), (port_main, port_leak) in paths.items():
        phase = coating if (pol == Polarization.V and port_in == coated) else 1.0
        cols = space.indices(port=port_in, pol=pol)
        matrix[space.indices(port=port_main, pol=pol), cols] = main * phase
        if eps:
            matrix[space.indices(port=port_leak, pol=pol), cols] = leak * phase

    side = CoatingSide(coating_side).value
    return ScatteringOperator(
        space=space,
        matrix=matrix,
        input_ports=frozenset(routing.inputs),
        output_ports=frozenset(routing.outputs),
        label=(
            f"PBS[{side}-coated {list(routing.inputs)}->{list(routing.outputs)}, "
            f"ext={imp.pbs_extinction_db:g}dB, TIR phase 0, leak phase pi/2]"
        ),
        unitary=True,
    )


def make_cubic_pbs(
    routing: PbsRouting,
    imp: Optional[ImperfectionParams] = None,
    space: Optional[ModeSpace] = None,
) -> ScatteringOperator:
    """Conventional cube PBS: H transmits, V reflects once and so flips l."""
    space = space or default_space()
    imp = imp or ImperfectionParams()
    if not isinstance(routing, PbsRouting):
        routing = PbsRouting(*routing)
    _check_ports(space, routing.inputs + routing.outputs, "cubic PBS")

    a, b = routing.inputs
    x, y = routing.outputs
    eps = imp.pbs_leak
    main = 1 / math.sqrt(1 + eps ** 2)
    leak = 1j * eps * main

    # (input, pol) -> (main output, leak output, reflected on the main path)
    paths = {
        (a, Polarization.H): (y, x, False),
        (b, Polarization.H): (x, y, False),
        (a, Polarization.V): (x, y, True),
        (b, Polarization.V): (y, x, True),
    }

    matrix = np.zeros((space.dimension, space.dimension), dtype=complex)
    for (port_in, pol), (port_main, port_leak, reflected) in paths.items():
        for l in space.oam_values:
            col = space.indices(port=port_in, pol=pol, l=l)[0]
            main_l = -l if reflected else l
            leak_l = l if reflected else -l
            matrix[space.indices(port=port_main, pol=pol, l=main_l)[0], col] = main
            if eps:
                matrix[space.indices(port=port_leak, pol=pol, l=leak_l)[0], col] = leak

    return ScatteringOperator(
        space=space,
        matrix=matrix,
        input_ports=frozenset(routing.inputs),
        output_ports=frozenset(routing.outputs),
        label=f"cubicPBS[{list(routing.inputs)}->{list(routing.outputs)}, ext={imp.pbs_extinction_db:g}dB]",
        unitary=True,
    )


def _mirror_matrix(space: ModeSpace, ports: Iterable[int], phase_rad: float, pol_phase_rad: float) -> np.ndarray:
    matrix = np.eye(space.dimension, dtype=complex)
    pol_factor = {Polarization.H: 1.0, Polarization.V: np.exp(1j * pol_phase_rad)}
    for port in ports:
        for pol in POLARIZATIONS:
            idx = space.indices(port=port, pol=pol)
            matrix[idx, :] = 0
            # idx is ascending in l, so reversing it maps l -> -l
            matrix[idx[::-1], idx] = np.exp(1j * phase_rad) * pol_factor[pol]
    return matrix


def make_mirror(
    acting_port: int,
    phase_rad: float = 0.0,
    imp: Optional[ImperfectionParams] = None,
    space: Optional[ModeSpace] = None,
) -> ScatteringOperator:
    space = space or default_space()
    imp = imp or ImperfectionParams()
    ports = _check_ports(space, [acting_port], "mirror")
    return ScatteringOperator(
        space=space,
        matrix=_mirror_matrix(space, ports, phase_rad, imp.mirror_pol_phase_rad),
        input_ports=frozenset(ports),
        output_ports=frozenset(ports),
        label=f"mirror(port {acting_port}, phase={phase_rad:g})",
        unitary=True,
    )


def crosstalk_matrix(n_oam: int, crosstalk_db: float, reach: int = 1) -> np.ndarray:
    """Unitary exp(i*eps*A) on the OAM charges, A coupling charges up to ``reach`` apart."""
    eps = db_to_amplitude(crosstalk_db)
    if eps == 0:
        return np.eye(n_oam, dtype=complex)
    distance = np.abs(np.subtract.outer(np.arange(n_oam), np.arange(n_oam)))
    adjacency = ((distance >= 1) & (distance <= reach)).astype(float)
    return expm(1j * eps * adjacency)


def shift_matrix(n_oam: int, delta_l: int) -> np.ndarray:
    """l -> l + delta_l; amplitude shifted past the truncation is dropped."""
    return np.eye(n_oam, k=-delta_l, dtype=complex)


def make_oam_shifter(
    delta_l: int,
    neighbor_crosstalk_db: float = math.inf,
    acting_port: int = 1,
    space: Optional[ModeSpace] = None,
    reach: int = 1,
) -> ScatteringOperator:
    """Hologram adding delta_l to the charge, followed by neighbor crosstalk."""
    space = space or default_space()
    ports = _check_ports(space, [acting_port], "OAM shifter")
    if abs(delta_l) > 2 * space.oam_range:
        raise DomainError(f"OAM shift {delta_l} exceeds 2L = {2 * space.oam_range}")
    if neighbor_crosstalk_db < 0:
        raise DomainError("crosstalk must be >= 0 dB")

    block = crosstalk_matrix(space.n_oam, neighbor_crosstalk_db, reach) @ shift_matrix(space.n_oam, delta_l)

    matrix = np.eye(space.dimension, dtype=complex)
    for pol in POLARIZATIONS:
        idx = space.indices(port=acting_port, pol=pol)
        matrix[np.ix_(idx, idx)] = block

    return ScatteringOperator(
        space=space,
        matrix=matrix,
        input_ports=frozenset(ports),
        output_ports=frozenset(ports),
        label=f"shifter(dl={delta_l}, xt={neighbor_crosstalk_db:g}dB) on port {acting_port}",
        unitary=delta_l == 0,
    )


def make_port_loss(
    imp: ImperfectionParams,
    ports: Optional[Iterable[int]] = None,
    space: Optional[ModeSpace] = None,
) -> ScatteringOperator:
    """Diagonal sqrt(T) per (port, polarization); identity on other ports."""
    space = space or default_space()
    ports = _check_ports(space, space.ports if ports is None else ports, "port loss")

    diagonal = np.ones(space.dimension, dtype=complex)
    lossless = True
    for port in ports:
        for pol in POLARIZATIONS:
            transmittance = imp.transmittance(port, pol)
            if transmittance != 1.0:
                lossless = False
                diagonal[space.indices(port=port, pol=pol)] = math.sqrt(transmittance)

    return ScatteringOperator(
        space=space,
        matrix=np.diag(diagonal),
        input_ports=frozenset(ports),
        output_ports=frozenset(ports),
        label=f"loss on {list(ports)}",
        unitary=lossless,
    )


def make_port_swap(
    a: int,
    b: int,
    phase_rad: float = 0.0,
    space: Optional[ModeSpace] = None,
) -> ScatteringOperator:
    """Free-space path carrying port a into port b and back, same phase both ways."""
    space = space or default_space()
    ports = _check_ports(space, [a, b], "swap")
    if a == b:
        raise RoutingError("swap needs two different ports")

    matrix = np.eye(space.dimension, dtype=complex)
    sa, sb = space.port_slices[a], space.port_slices[b]
    width = sa.stop - sa.start
    phase = np.exp(1j * phase_rad)
    matrix[sa, sa] = 0
    matrix[sb, sb] = 0
    matrix[sb, sa] = phase * np.eye(width)
    matrix[sa, sb] = phase * np.eye(width)

    return ScatteringOperator(
        space=space,
        matrix=matrix,
        input_ports=frozenset(ports),
        output_ports=frozenset(ports),
        label=f"swap({a}<->{b}, phase={phase_rad:g})",
        unitary=True,
    )


def prepare_linear_state(
    hwp0_deg: float,
    entry_port: int = 1,
    l: int = 0,
    space: Optional[ModeSpace] = None,
) -> FieldState:
    """Horizontal laser light after HWP_0: cos(2t)|h,l> + sin(2t)|v,l>."""
    space = space or default_space()
    theta = math.radians(2 * hwp0_deg)
    return FieldState.from_jones(space, entry_port, (math.cos(theta), math.sin(theta)), l)


# Element lines: "<kind> key=value key=value ..."
_LIST_VALUE = re.compile(r"^\[\s*(-?\d+(\s*,\s*-?\d+)*)?\s*\]$")


def _parse_value(raw: str):
    if _LIST_VALUE.match(raw):
        inner = raw.strip()[1:-1].strip()
        return [int(p) for p in inner.split(",")] if inner else []
    lowered = raw.lower()
    if lowered in ("inf", "+inf", "infinity"):
        return math.inf
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        return raw


def _parse_fields(tokens: Iterable[str]) -> dict:
    fields = {}
    for token in tokens:
        if "=" not in token:
            raise ValueError(f"expected key=value, got {token!r}")
        key, raw = token.split("=", 1)
        fields[key.strip().lower()] = _parse_value(raw.strip())
    return fields


def _pop(fields: dict, key: str, default=None, required: bool = False):
    if key in fields:
        return fields.pop(key)
    if required:
        raise ValueError(f"missing {key}=")
    return default


def parse_element(
    line: str,
    space: Optional[ModeSpace] = None,
    imp: Optional[ImperfectionParams] = None,
) -> ScatteringOperator:
    """Build an element from a circuit line such as ``hwp theta=22.5 ports=[3,4]``.

    Kinds: hwp, pbs, cubic_pbs, mirror, shifter, swap, loss. Raises ValueError on
    malformed lines and RoutingError on impossible port maps.
    """
    space = space or default_space()
    imp = imp or ImperfectionParams()

    # ports=[3, 4] may contain spaces; rejoin list tokens before splitting
    normalized = re.sub(r"\[\s*([^\]]*)\]", lambda m: "[" + re.sub(r"\s+", "", m.group(1)) + "]", line)
    tokens = shlex.split(normalized, comments=False)
    if not tokens:
        raise ValueError("empty element line")

    kind = tokens[0].lower()
    fields = _parse_fields(tokens[1:])

    if kind == "hwp":
        ports = _pop(fields, "ports", required=True)
        op = make_hwp(
            float(_pop(fields, "theta", required=True)),
            ports if isinstance(ports, list) else [int(ports)],
            imp=imp,
            space=space,
        )
    elif kind in ("pbs", "cubic_pbs"):
        inputs = _pop(fields, "in", required=True)
        outputs = _pop(fields, "out", required=True)
        if not isinstance(inputs, list) or not isinstance(outputs, list):
            raise ValueError("in= and out= take port lists like [1,2]")
        routing = PbsRouting(inputs=tuple(inputs), outputs=tuple(outputs))
        element_imp = imp
        ext_db = _pop(fields, "ext_db")
        if ext_db is not None:
            element_imp = imp.model_copy(update={"pbs_extinction_db": float(ext_db)})
            if element_imp.pbs_extinction_db < 0:
                raise ValueError("extinction must be ≥ 0")
        if kind == "pbs":
            coating = CoatingSide(str(_pop(fields, "coating", "right")).lower())
            op = make_modified_pbs(coating, routing, imp=element_imp, space=space)
        else:
            op = make_cubic_pbs(routing, imp=element_imp, space=space)
    elif kind == "mirror":
        op = make_mirror(
            int(_pop(fields, "port", required=True)),
            float(_pop(fields, "phase", 0.0)),
            imp=imp,
            space=space,
        )
    elif kind == "shifter":
        op = make_oam_shifter(
            int(_pop(fields, "delta", required=True)),
            float(_pop(fields, "xt_db", math.inf)),
            int(_pop(fields, "port", 1)),
            space=space,
            reach=int(_pop(fields, "reach", 1)),
        )
    elif kind == "swap":
        op = make_port_swap(
            int(_pop(fields, "a", required=True)),
            int(_pop(fields, "b", required=True)),
            float(_pop(fields, "phase", 0.0)),
            space=space,
        )
    elif kind == "loss":
        port = int(_pop(fields, "port", required=True))
        transmittance = float(_pop(fields, "t", required=True))
        pols = str(_pop(fields, "pol", "HV")).upper()
        loss = {(port, Polarization(p)): transmittance for p in pols}
        op = make_port_loss(ImperfectionParams(port_loss=loss), ports=[port], space=space)
    else:
        raise ValueError(f"unknown element kind {kind!r}")

    if fields:
        raise ValueError(f"unknown {kind} keys: {sorted(fields)}")

    logger.debug(f"Parsed element line {line!r} as {op.label}")
    return op
