"""CSV formats for parameter lists and transform data.

Parameter files carry a header naming the family::

    kind,s,t,x0,y0,z0,alpha,beta      # full seven-parameter family
    kind,p,x0,y0                      # translated family

``kind`` is ``apple`` or ``lemon`` on every row. Data files are
``index,value`` with one row per parameter, in parameter order.
"""
from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .errors import InvalidParamsError
from .geometry import SurfaceKind, TorusParams
from .transforms import DataGrid, RestrictedParams

FULL_COLUMNS = ("kind", "s", "t", "x0", "y0", "z0", "alpha", "beta")
RESTRICTED_COLUMNS = ("kind", "p", "x0", "y0")


def format_params(plist, kinds) -> str:
    """``kinds`` is one kind for all rows or a sequence aligned with ``plist``."""
    plist = list(plist)
    if isinstance(kinds, (str, SurfaceKind)):
        kinds = [kinds] * len(plist)
    restricted = bool(plist) and isinstance(plist[0], RestrictedParams)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESTRICTED_COLUMNS if restricted else FULL_COLUMNS)
    for prm, kind in zip(plist, kinds):
        name = SurfaceKind.parse(kind).name.lower()
        if isinstance(prm, RestrictedParams):
            w.writerow([name, repr(prm.p), repr(prm.x0), repr(prm.y0)])
        else:
            w.writerow([name, repr(prm.s), repr(prm.t), *(repr(v) for v in prm.x0),
                        repr(prm.alpha), repr(prm.beta)])
    return buf.getvalue()


def parse_params(text: str):
    """Return ``(params, kinds)``; an empty file (or header only) gives two empty lists."""
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r and not r[0].lstrip().startswith("#")]
    if not rows:
        return [], []
    header = tuple(c.strip() for c in rows[0])
    if header not in (FULL_COLUMNS, RESTRICTED_COLUMNS):
        raise InvalidParamsError(f"unrecognised parameter header {','.join(header)}; expected "
                                 f"{','.join(FULL_COLUMNS)} or {','.join(RESTRICTED_COLUMNS)}")
    params, kinds = [], []
    for i, row in enumerate(rows[1:]):
        if len(row) != len(header):
            raise InvalidParamsError(f"expected {len(header)} fields, got {len(row)}", i)
        try:
            kind = SurfaceKind.parse(row[0])
            vals = [float(v) for v in row[1:]]
        except ValueError as exc:
            raise InvalidParamsError(str(exc), i) from None
        if not np.all(np.isfinite(vals)):
            raise InvalidParamsError("non-finite value", i)
        if header == RESTRICTED_COLUMNS:
            params.append(RestrictedParams(*vals))
        else:
            s, t, x0, y0, z0, alpha, beta = vals
            params.append(TorusParams(s, t, (x0, y0, z0), alpha, beta, kind))
        kinds.append(kind)
    return params, kinds


def save_params(path, plist, kinds) -> Path:
    path = Path(path)
    path.write_text(format_params(plist, kinds))
    return path


def load_params(path):
    return parse_params(Path(path).read_text())


def format_data(values) -> str:
    values = np.asarray(values.values if isinstance(values, DataGrid) else values, dtype=float).reshape(-1)
    lines = ["index,value"] + [f"{i},{v!r}" for i, v in enumerate(values.tolist())]
    return "\n".join(lines) + "\n"


def parse_data(text: str) -> np.ndarray:
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if not rows:
        return np.zeros(0)
    if [c.strip() for c in rows[0]] != ["index", "value"]:
        raise ValueError("data file must start with the header index,value")
    idx = np.array([int(r[0]) for r in rows[1:]], dtype=np.int64)
    vals = np.array([float(r[1]) for r in rows[1:]], dtype=float)
    if len(idx) and not np.array_equal(idx, np.arange(len(idx))):
        raise ValueError("data indices must be 0, 1, 2, ... in order")
    return vals


def save_data(path, values) -> Path:
    path = Path(path)
    path.write_text(format_data(values))
    return path


def load_data(path) -> np.ndarray:
    return parse_data(Path(path).read_text())
