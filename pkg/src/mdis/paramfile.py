"""Text serialisation of :class:`~mdis.hmt.HmtParams`.

Parameter files are TOML documents with one ``[[scale]]`` table per scale,
coarsest first::

    format = "mdis-hmt"
    version = 1
    flavor = "uhmt"
    bands = 3
    root_prior = [0.5, 0.5]

    [[scale]]
    index = 1
    variance = [[1e-4, 1e-4, 5e-5], [0.01, 0.01, 0.005]]

    [[scale]]
    index = 2
    transition = [[0.9, 0.1], [0.2, 0.8]]
    variance = [[...], [...]]

``variance`` holds one row of per-band variances per state. Vector models
store ``covariance`` instead: one ``bands x bands`` matrix per state. Every
scale except the first carries a ``transition`` matrix whose rows are
indexed by the parent state. Floats are written with ``repr`` so that
reading and writing a file reproduces it byte for byte.
"""
from __future__ import annotations

import sys
from pathlib import Path

import jsonschema
import numpy as np

from .hmt import HmtParams

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["SCHEMA", "default_params_path", "dumps_params", "load_params", "loads_params", "save_params"]

_PAIR = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_ROWS = {"type": "array", "items": {"type": "array", "items": {"type": "number"}, "minItems": 1}, "minItems": 2, "maxItems": 2}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "MDIS hidden Markov tree parameters",
    "type": "object",
    "required": ["format", "version", "flavor", "bands", "root_prior", "scale"],
    "additionalProperties": False,
    "properties": {
        "format": {"const": "mdis-hmt"},
        "version": {"const": 1},
        "flavor": {"enum": ["uhmt", "thmt", "vhmt"]},
        "bands": {"type": "integer", "minimum": 1},
        "root_prior": _PAIR,
        "scale": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["index"],
                "additionalProperties": False,
                "properties": {
                    "index": {"type": "integer", "minimum": 1},
                    "transition": {"type": "array", "items": _PAIR, "minItems": 2, "maxItems": 2},
                    "variance": _ROWS,
                    "covariance": {
                        "type": "array",
                        "minItems": 2,
                        "maxItems": 2,
                        "items": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
                    },
                },
            },
        },
    },
}


def default_params_path() -> Path:
    return Path(__file__).parent / "config" / "uhmt_natural.toml"


def _fmt(x) -> str:
    return repr(float(x))


def _vec(v) -> str:
    return "[" + ", ".join(_fmt(x) for x in v) + "]"


def _mat(m) -> str:
    return "[" + ", ".join(_vec(r) for r in m) + "]"


def dumps_params(params: HmtParams) -> str:
    lines = [
        'format = "mdis-hmt"',
        "version = 1",
        f'flavor = "{params.flavor}"',
        f"bands = {params.bands}",
        f"root_prior = {_vec(params.root_prior)}",
    ]
    for j in range(params.levels):
        lines += ["", "[[scale]]", f"index = {j + 1}"]
        if j > 0:
            lines.append(f"transition = {_mat(params.transitions[j - 1])}")
        if params.vector:
            lines.append("covariance = [" + ", ".join(_mat(c) for c in params.emission[j]) + "]")
        else:
            lines.append(f"variance = {_mat(params.emission[j])}")
    return "\n".join(lines) + "\n"


def loads_params(text: str) -> HmtParams:
    """Parse and validate a parameter document.

    Raises
    ------
    ValueError
        On syntax errors, schema violations or broken invariants; the
        message names the offending field.
    """
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ValueError(f"malformed parameter file: {exc}") from None
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ValueError(f"{where}: {exc.message}") from None

    scales = doc["scale"]
    for pos, s in enumerate(scales):
        if s["index"] != pos + 1:
            raise ValueError(f"scale/{pos}/index: expected {pos + 1}, got {s['index']}")
        if pos > 0 and "transition" not in s:
            raise ValueError(f"scale/{pos}/transition: required for scale {pos + 1}")
        if pos == 0 and "transition" in s:
            raise ValueError("scale/0/transition: the root scale has no parent")
        key = "covariance" if doc["flavor"] == "vhmt" else "variance"
        if key not in s:
            raise ValueError(f"scale/{pos}/{key}: required for flavor {doc['flavor']}")

    key = "covariance" if doc["flavor"] == "vhmt" else "variance"
    try:
        emission = np.array([s[key] for s in scales], dtype=np.float64)
    except ValueError:
        raise ValueError(f"scale/*/{key}: ragged arrays") from None
    if emission.shape[2] != doc["bands"]:
        raise ValueError(f"bands: declared {doc['bands']} but {key} has {emission.shape[2]}")
    trans = np.array([s["transition"] for s in scales[1:]], dtype=np.float64).reshape(-1, 2, 2)
    return HmtParams(doc["flavor"], np.array(doc["root_prior"]), trans, emission)


def save_params(params: HmtParams, path) -> None:
    Path(path).write_text(dumps_params(params), encoding="utf-8")


def load_params(path) -> HmtParams:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"parameter file not found: {path}")
    return loads_params(path.read_text(encoding="utf-8"))
