from __future__ import annotations

import math
from typing import Any, Sequence

from tabulate import TableFormat, tabulate

__all__ = ["table", "format_value"]


def format_value(x: Any, digits: int = 6) -> str:
    if isinstance(x, bool):
        return "yes" if x else "no"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        if math.isnan(x):
            return ""
        return f"{x:.{digits}g}"
    return str(x)


def table(
    rows: Sequence[Sequence[Any]],
    headers: Sequence[str],
    tablefmt: str | TableFormat = "simple",
    digits: int = 6,
) -> str:
    """A tabulate table with consistently formatted numbers."""
    return tabulate(
        [[format_value(v, digits) for v in row] for row in rows],
        headers=list(headers),
        tablefmt=tablefmt,
        disable_numparse=True,
    )
