import math
from typing import List, Optional

from pydantic import BaseModel, Field

CSV_FIELDS = (
    "er_db", "sr", "pd", "er_oam_db", "visibility",
    "guard_hit", "seed", "pd_std", "visibility_std", "provenance",
)


def _format_value(value, digits: int) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return f"{value:.{digits}g}"
    return str(value)


class MetricsReport(BaseModel):
    er_db: Optional[float] = None
    sr: Optional[float] = Field(None, ge=0, le=1)
    pd: Optional[float] = Field(None, ge=0)
    er_oam_db: Optional[float] = None
    visibility: Optional[float] = Field(None, ge=0, le=1)
    guard_hit: bool = False
    provenance: str = ""
    seed: Optional[int] = None
    pd_std: Optional[float] = Field(None, ge=0)
    visibility_std: Optional[float] = Field(None, ge=0)

    @classmethod
    def csv_header(cls) -> str:
        return ",".join(CSV_FIELDS)

    def to_csv_row(self, digits: int = 12) -> str:
        cells: List[str] = []
        for name in CSV_FIELDS:
            cell = _format_value(getattr(self, name), digits)
            if name == "provenance" and ("," in cell or '"' in cell):
                cell = '"' + cell.replace('"', '""') + '"'
            cells.append(cell)
        return ",".join(cells)
