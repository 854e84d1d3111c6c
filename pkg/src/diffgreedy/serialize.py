"""Exact-decimal text encodings for arrays and parameter files."""

from __future__ import annotations

import json
import math

import numpy as np

from .errors import FormatError


def format_float(x) -> str:
    """17 significant digits: enough for an exact float64 round trip."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite value {x!r}")
    text = format(x, ".17g")
    # keep integral values floats on the way back in (JSON "-0" would lose its sign)
    if "." not in text and "e" not in text:
        text += ".0"
    return text


def format_array(a) -> str:
    return "[" + ",".join(format_float(v) for v in np.asarray(a, dtype=np.float64).ravel()) + "]"


def params_to_json(kind: str, params) -> str:
    """One JSON object: ``{"kind": ..., "arrays": {name: {"shape": [...], "data": [...]}}}``."""
    blocks = []
    for name, arr in params.named_arrays().items():
        shape = ",".join(str(s) for s in arr.shape)
        blocks.append(f'{json.dumps(name)}:{{"shape":[{shape}],"data":{format_array(arr)}}}')
    return f'{{"kind":{json.dumps(kind)},"arrays":{{' + ",".join(blocks) + "}}\n"


def params_from_json(text: str) -> tuple[str, dict]:
    try:
        obj = json.loads(text)
        arrays = {
            name: np.array(block["data"], dtype=np.float64).reshape(block["shape"])
            for name, block in obj["arrays"].items()
        }
        return str(obj["kind"]), arrays
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed parameter file: {exc}") from None
