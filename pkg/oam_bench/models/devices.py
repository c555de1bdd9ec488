import enum
from dataclasses import dataclass
from typing import Tuple

from oam_bench.exceptions import RoutingError


class CoatingSide(str, enum.Enum):
    LEFT = "left"
    RIGHT = "right"


class DeviceKind(str, enum.Enum):
    NONE = "none"
    PBS = "pbs"
    TBS = "tbs"
    CUBIC_PBS = "cubic_pbs"


@dataclass(frozen=True)
class PbsRouting:
    """Two input ports (a, b) and two output ports (x, y) of a polarizing splitter.

    H crosses over (a -> y, b -> x); V stays on its side (a -> x, b -> y).
    """
    inputs: Tuple[int, int]
    outputs: Tuple[int, int]

    def __post_init__(self):
        inputs = tuple(int(p) for p in self.inputs)
        outputs = tuple(int(p) for p in self.outputs)
        if len(inputs) != 2 or len(outputs) != 2:
            raise RoutingError(f"PBS routing needs 2 inputs and 2 outputs, got {inputs} -> {outputs}")
        if len(set(inputs)) != 2 or len(set(outputs)) != 2:
            raise RoutingError(f"PBS routing ports must be distinct, got {inputs} -> {outputs}")
        if set(inputs) & set(outputs):
            raise RoutingError(f"PBS input and output ports overlap: {inputs} -> {outputs}")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "outputs", outputs)

    def coated_input(self, side: CoatingSide) -> int:
        a, b = self.inputs
        return a if CoatingSide(side) == CoatingSide.LEFT else b


PBS1_ROUTING = PbsRouting(inputs=(1, 2), outputs=(3, 4))
PBS2_ROUTING = PbsRouting(inputs=(3, 4), outputs=(5, 6))
