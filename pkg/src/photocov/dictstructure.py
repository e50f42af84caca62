from __future__ import annotations

import enum
from typing import Any

import numpy as np

__all__ = (
    "_STRUCTURE_CLASSES",
    "_structure",
    "_unstructure",
)

_STRUCTURE_CLASSES: dict[str, Any] = {}


def _structure(x: Any) -> Any:
    if isinstance(x, dict) and ("class" in x):
        x = dict(x)
        try:
            c = _STRUCTURE_CLASSES[x.pop("class")]
        except KeyError as err:
            raise ValueError(f"Unknown class {err.args[0]!r}.") from err
        if hasattr(c, "_structure"):
            return c._structure(x)
        for k in x:
            x[k] = _structure(x[k])
        return c(**x)
    elif isinstance(x, list):
        return [_structure(y) for y in x]
    else:
        return x


def _unstructure(x: Any) -> Any:
    if isinstance(x, np.ndarray):
        return x.tolist()
    elif isinstance(x, np.generic):
        return x.item()
    elif isinstance(x, enum.Enum):
        return x.value
    elif isinstance(x, (list, tuple)):
        return [_unstructure(y) for y in x]
    elif isinstance(x, dict):
        return {str(k): _unstructure(v) for k, v in x.items()}
    elif hasattr(x, "_unstructure"):
        return x._unstructure()
    elif hasattr(x, "__attrs_attrs__"):
        d = {}
        d["class"] = x.__class__.__name__
        for att in x.__attrs_attrs__:  # type: Attribute
            val = getattr(x, att.name)
            if val is att.default:
                continue
            d[att.name] = _unstructure(val)
        return d
    else:
        return x
