import math

from jinja2 import Environment, PackageLoader, StrictUndefined

# Shared templates instance
templates = Environment(
    loader=PackageLoader("oam_bench", "templates"),
    undefined=StrictUndefined,
    keep_trailing_newline=True,
    trim_blocks=True,
    lstrip_blocks=True,
)


def fmt(value, digits: int = 12) -> str:
    """Numbers as in the CSV files; everything else via str()."""
    if value is None:
        return "n/a"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return f"{value:.{digits}g}"
    return str(value)


def fmt_complex(value: complex) -> str:
    return f"{value.real:+.6f}{value.imag:+.6f}i"


templates.filters["fmt"] = fmt
templates.filters["fmt_complex"] = fmt_complex
