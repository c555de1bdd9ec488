"""Finite basis port ⊗ polarization ⊗ OAM and the linear algebra on it.

Basis order is port-major, then polarization (H before V), then OAM charge
ascending, so a flat index is ``(port_pos * 2 + pol_pos) * (2L + 1) + (l + L)``.
States and operators are immutable once built.
"""
import enum
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import FrozenSet, Iterable, List, Optional, Tuple

import numpy as np

from oam_bench.exceptions import RoutingError, SpaceMismatchError
from oam_bench.utils.validation import validate_oam_range, validate_ports

logger = logging.getLogger(__name__)

AMPLITUDE_TOL = 1e-12


class Polarization(str, enum.Enum):
    H = "H"
    V = "V"


POLARIZATIONS: Tuple[Polarization, ...] = (Polarization.H, Polarization.V)


@dataclass(frozen=True)
class ModeIndex:
    port: int
    pol: Polarization
    l: int


@dataclass(frozen=True)
class ModeSpace:
    ports: Tuple[int, ...]
    oam_range: int

    def __post_init__(self):
        object.__setattr__(self, "ports", validate_ports(self.ports))
        object.__setattr__(self, "oam_range", validate_oam_range(int(self.oam_range)))

    @property
    def n_oam(self) -> int:
        return 2 * self.oam_range + 1

    @property
    def dimension(self) -> int:
        return len(self.ports) * 2 * self.n_oam

    @property
    def oam_values(self) -> range:
        return range(-self.oam_range, self.oam_range + 1)

    def has_port(self, port: int) -> bool:
        return port in self.ports

    def basis(self) -> List[ModeIndex]:
        return [
            ModeIndex(port, pol, l)
            for port in self.ports
            for pol in POLARIZATIONS
            for l in self.oam_values
        ]

    def indices(
        self,
        port: Optional[int] = None,
        pol: Optional[Polarization] = None,
        l: Optional[int] = None,
    ) -> np.ndarray:
        """Flat indices of every basis element matching the given filters, in basis order."""
        ports = self.ports if port is None else (port,)
        pols = POLARIZATIONS if pol is None else (Polarization(pol),)
        charges = self.oam_values if l is None else (l,)
        return np.array(
            [flatten(self, ModeIndex(p, q, m)) for p in ports for q in pols for m in charges],
            dtype=int,
        )

    @cached_property
    def port_slices(self) -> dict:
        width = 2 * self.n_oam
        return {p: slice(i * width, (i + 1) * width) for i, p in enumerate(self.ports)}

    @cached_property
    def charge_of_index(self) -> np.ndarray:
        """OAM charge carried by each flat index."""
        return np.tile(np.arange(-self.oam_range, self.oam_range + 1), len(self.ports) * 2)


def flatten(space: ModeSpace, m: ModeIndex) -> int:
    try:
        port_pos = space.ports.index(m.port)
    except ValueError:
        raise IndexError(f"Port {m.port} is not in the mode space {space.ports}")

    try:
        pol_pos = POLARIZATIONS.index(Polarization(m.pol))
    except ValueError:
        raise IndexError(f"Unknown polarization {m.pol!r}")

    if not -space.oam_range <= m.l <= space.oam_range:
        raise IndexError(f"OAM charge {m.l} outside truncation |l| <= {space.oam_range}")

    return (port_pos * 2 + pol_pos) * space.n_oam + (m.l + space.oam_range)


def unflatten(space: ModeSpace, index: int) -> ModeIndex:
    if not 0 <= index < space.dimension:
        raise IndexError(f"Flat index {index} outside [0, {space.dimension})")
    block, charge = divmod(index, space.n_oam)
    port_pos, pol_pos = divmod(block, 2)
    return ModeIndex(space.ports[port_pos], POLARIZATIONS[pol_pos], charge - space.oam_range)


def _readonly(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=complex)
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class FieldState:
    space: ModeSpace
    amplitudes: np.ndarray

    def __post_init__(self):
        amplitudes = _readonly(self.amplitudes)
        if amplitudes.shape != (self.space.dimension,):
            raise ValueError(
                f"Amplitude vector has shape {amplitudes.shape}, expected ({self.space.dimension},)"
            )
        if not np.all(np.isfinite(amplitudes)):
            raise ValueError("Amplitudes must be finite")
        object.__setattr__(self, "amplitudes", amplitudes)

    @classmethod
    def vacuum(cls, space: ModeSpace) -> "FieldState":
        return cls(space, np.zeros(space.dimension, dtype=complex))

    @classmethod
    def basis_state(cls, space: ModeSpace, port: int, pol: Polarization, l: int = 0) -> "FieldState":
        amplitudes = np.zeros(space.dimension, dtype=complex)
        amplitudes[flatten(space, ModeIndex(port, Polarization(pol), l))] = 1.0
        return cls(space, amplitudes)

    @classmethod
    def from_jones(cls, space: ModeSpace, port: int, jones, l: int = 0) -> "FieldState":
        """State alpha|h⊗l, port> + beta|v⊗l, port> for jones = (alpha, beta)."""
        alpha, beta = jones
        amplitudes = np.zeros(space.dimension, dtype=complex)
        amplitudes[flatten(space, ModeIndex(port, Polarization.H, l))] = alpha
        amplitudes[flatten(space, ModeIndex(port, Polarization.V, l))] = beta
        return cls(space, amplitudes)

    def intensities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @property
    def total_intensity(self) -> float:
        return float(np.sum(self.intensities()))

    def amplitude(self, port: int, pol: Polarization, l: int = 0) -> complex:
        return complex(self.amplitudes[flatten(self.space, ModeIndex(port, Polarization(pol), l))])

    def oam_distribution(self) -> dict:
        """Intensity per OAM charge, summed over ports and polarizations."""
        weights = np.bincount(
            self.space.charge_of_index + self.space.oam_range,
            weights=self.intensities(),
            minlength=self.space.n_oam,
        )
        return {l: float(w) for l, w in zip(self.space.oam_values, weights)}


@dataclass(frozen=True, eq=False)
class ScatteringOperator:
    space: ModeSpace
    matrix: np.ndarray
    input_ports: FrozenSet[int]
    output_ports: FrozenSet[int]
    label: str = ""
    unitary: bool = False

    def __post_init__(self):
        matrix = _readonly(self.matrix)
        dim = self.space.dimension
        if matrix.shape != (dim, dim):
            raise ValueError(f"Operator matrix has shape {matrix.shape}, expected ({dim}, {dim})")
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "input_ports", frozenset(self.input_ports))
        object.__setattr__(self, "output_ports", frozenset(self.output_ports))

        unknown = (self.input_ports | self.output_ports) - set(self.space.ports)
        if unknown:
            raise RoutingError(f"{self.label or 'operator'} references unknown ports {sorted(unknown)}")

    @property
    def spectral_norm(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))

    def input_indices(self) -> np.ndarray:
        return np.concatenate([self.space.indices(port=p) for p in sorted(self.input_ports)])

    def is_passive(self, tol: float = AMPLITUDE_TOL) -> bool:
        return self.spectral_norm <= 1 + tol

    def is_isometry(self, tol: float = AMPLITUDE_TOL) -> bool:
        """M†M = I on the columns of the input ports (the supported subspace)."""
        if not self.input_ports:
            return False
        columns = self.matrix[:, self.input_indices()]
        gram = columns.conj().T @ columns
        return bool(np.max(np.abs(gram - np.eye(gram.shape[0]))) <= tol)

    def oam_leakage(self) -> float:
        """Largest |entry| coupling different OAM charges."""
        charges = self.space.charge_of_index
        cross = charges[:, None] != charges[None, :]
        if not np.any(cross):
            return 0.0
        return float(np.max(np.abs(self.matrix[cross])))

    def transpose(self, label: Optional[str] = None) -> "ScatteringOperator":
        """Reverse pass of a reciprocal element: inputs and outputs trade places."""
        return ScatteringOperator(
            space=self.space,
            matrix=self.matrix.T,
            input_ports=self.output_ports,
            output_ports=self.input_ports,
            label=label or f"reverse({self.label})",
            unitary=self.unitary,
        )

    def block(self, out_port: int, in_port: int) -> np.ndarray:
        return self.matrix[self.space.port_slices[out_port], self.space.port_slices[in_port]]


def identity(space: ModeSpace, label: str = "identity") -> ScatteringOperator:
    return ScatteringOperator(
        space=space,
        matrix=np.eye(space.dimension, dtype=complex),
        input_ports=frozenset(space.ports),
        output_ports=frozenset(space.ports),
        label=label,
        unitary=True,
    )


def _check_same_space(a: ModeSpace, b: ModeSpace, what: str) -> None:
    if a != b:
        raise SpaceMismatchError(f"{what}: mode spaces differ ({a} vs {b})")


def apply(op: ScatteringOperator, s: FieldState) -> FieldState:
    _check_same_space(op.space, s.space, f"apply {op.label}")
    return FieldState(op.space, op.matrix @ s.amplitudes)


def _supported_ports(space: ModeSpace, matrix: np.ndarray, candidates: Iterable[int], axis: int) -> FrozenSet[int]:
    supported = set()
    for port in candidates:
        sl = space.port_slices[port]
        part = matrix[:, sl] if axis == 1 else matrix[sl, :]
        if np.any(part != 0):
            supported.add(port)
    return frozenset(supported)


def compose(first: ScatteringOperator, second: ScatteringOperator) -> ScatteringOperator:
    """Operator of light passing through ``first`` and then ``second``."""
    _check_same_space(first.space, second.space, f"compose {first.label} -> {second.label}")

    matrix = second.matrix @ first.matrix
    if not np.any(matrix) and np.any(first.matrix) and np.any(second.matrix):
        raise RoutingError(f"No optical path connects {first.label} to {second.label}")

    space = first.space
    input_ports = _supported_ports(space, matrix, first.input_ports | second.input_ports, axis=1)
    output_ports = _supported_ports(space, matrix, first.output_ports | second.output_ports, axis=0)

    return ScatteringOperator(
        space=space,
        matrix=matrix,
        input_ports=input_ports,
        output_ports=output_ports,
        label=f"{second.label} . {first.label}",
        unitary=first.unitary and second.unitary,
    )


def compose_all(operators: Iterable[ScatteringOperator]) -> ScatteringOperator:
    """Compose a chain listed in propagation order."""
    operators = list(operators)
    if not operators:
        raise ValueError("Cannot compose an empty chain")
    result = operators[0]
    for op in operators[1:]:
        result = compose(result, op)
    return result


def port_intensity(s: FieldState, port: int) -> float:
    if not s.space.has_port(port):
        raise IndexError(f"Port {port} is not in the mode space {s.space.ports}")
    return float(np.sum(np.abs(s.amplitudes[s.space.port_slices[port]]) ** 2))
