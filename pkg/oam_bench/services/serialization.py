"""Plain-text matrix format for operators and states.

    modespace P L
    row col re im        (one line per nonzero entry, operators)
    index re im          (one line per nonzero amplitude, states)

Indices follow the flat basis order; values are written with %.17g so a
dump/load cycle is exact. Ports are assumed to be 1..P.
"""
from typing import Iterable, List, TextIO, Union

import numpy as np

from oam_bench.models.mode_space import FieldState, ModeSpace, ScatteringOperator


HEADER = "modespace"


def _header(space: ModeSpace) -> str:
    if space.ports != tuple(range(1, len(space.ports) + 1)):
        raise ValueError(f"plain-text format needs ports 1..P, got {space.ports}")
    return f"{HEADER} {len(space.ports)} {space.oam_range}"


def _fmt(x: float) -> str:
    return "%.17g" % x


def dump_operator(op: ScatteringOperator) -> str:
    lines = [_header(op.space)]
    rows, cols = np.nonzero(op.matrix)
    for r, c in zip(rows, cols):
        value = op.matrix[r, c]
        lines.append(f"{r} {c} {_fmt(value.real)} {_fmt(value.imag)}")
    return "\n".join(lines) + "\n"


def dump_state(state: FieldState) -> str:
    lines = [_header(state.space)]
    for i in np.nonzero(state.amplitudes)[0]:
        value = state.amplitudes[i]
        lines.append(f"{i} {_fmt(value.real)} {_fmt(value.imag)}")
    return "\n".join(lines) + "\n"


def _data_lines(text: Union[str, TextIO]) -> List[List[str]]:
    raw: Iterable[str] = text.splitlines() if isinstance(text, str) else text
    rows = []
    for line in raw:
        line = line.strip()
        if line and not line.startswith("#"):
            rows.append(line.split())
    if not rows:
        raise ValueError("empty matrix file")
    return rows


def _parse_header(tokens: List[str]) -> ModeSpace:
    if len(tokens) != 3 or tokens[0] != HEADER:
        raise ValueError(f"expected '{HEADER} P L' header, got {' '.join(tokens)!r}")
    n_ports, oam_range = int(tokens[1]), int(tokens[2])
    return ModeSpace(ports=tuple(range(1, n_ports + 1)), oam_range=oam_range)


def load_operator(text: Union[str, TextIO], label: str = "loaded", unitary: bool = False) -> ScatteringOperator:
    """Rebuild an operator; its ports are the port blocks holding nonzero columns/rows.

    Operators with gain (spectral norm above 1 + 1e-12) are rejected.
    """
    rows = _data_lines(text)
    space = _parse_header(rows[0])
    matrix = np.zeros((space.dimension, space.dimension), dtype=complex)
    for tokens in rows[1:]:
        if len(tokens) != 4:
            raise ValueError(f"expected 'row col re im', got {' '.join(tokens)!r}")
        r, c = int(tokens[0]), int(tokens[1])
        matrix[r, c] = complex(float(tokens[2]), float(tokens[3]))

    inputs = frozenset(p for p in space.ports if np.any(matrix[:, space.port_slices[p]]))
    outputs = frozenset(p for p in space.ports if np.any(matrix[space.port_slices[p], :]))
    op = ScatteringOperator(
        space=space,
        matrix=matrix,
        input_ports=inputs,
        output_ports=outputs,
        label=label,
        unitary=unitary,
    )
    if not op.is_passive():
        raise ValueError(f"operator has gain: spectral norm {op.spectral_norm:.17g} > 1")
    return op


def load_state(text: Union[str, TextIO]) -> FieldState:
    rows = _data_lines(text)
    space = _parse_header(rows[0])
    amplitudes = np.zeros(space.dimension, dtype=complex)
    for tokens in rows[1:]:
        if len(tokens) != 3:
            raise ValueError(f"expected 'index re im', got {' '.join(tokens)!r}")
        amplitudes[int(tokens[0])] = complex(float(tokens[1]), float(tokens[2]))
    return FieldState(space, amplitudes)
