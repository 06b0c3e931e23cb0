"""Plain-text file formats: potentials, operators, wave fields, reports.

All numbers are written with ``repr`` so finite doubles round-trip exactly.
"""
import json
import re
from pathlib import Path

import numpy as np

from .core import DiscreteOperator, HermitianPotential
from .exceptions import ConfigurationError, DimensionError

_HEADER = re.compile(r"#\s*(.*)")


def _parse_header(line):
    m = _HEADER.match(line.strip())
    if not m:
        raise ConfigurationError(f"missing '#' header line, got {line[:60]!r}")
    fields = {}
    for token in m.group(1).split():
        key, sep, val = token.partition("=")
        if not sep:
            raise ConfigurationError(f"malformed header token {token!r}")
        fields[key] = val
    return fields


def _fmt(v):
    return repr(float(v))


def _complex_row(values):
    values = np.asarray(values).ravel()
    parts = []
    for z in values:
        parts.append(_fmt(z.real))
        parts.append(_fmt(z.imag))
    return parts


def _parse_complex(parts):
    arr = np.array([float(p) for p in parts])
    return arr[0::2] + 1j * arr[1::2]


def save_potential(potential, path):
    """One row per sample: ``x`` then Re/Im pairs of the row-major entries."""
    q = potential.samples
    lines = [f"# n={potential.n} h={_fmt(potential.h)} Xmax={_fmt(potential.X_max)}"]
    for x, qi in zip(potential.x, q):
        lines.append(",".join([_fmt(x)] + _complex_row(qi)))
    Path(path).write_text("\n".join(lines) + "\n")


def load_potential(path, source=None):
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"potential file not found: {path}")
    lines = path.read_text().splitlines()
    head = _parse_header(lines[0])
    try:
        n = int(head["n"])
        h = float(head["h"])
    except (KeyError, ValueError):
        raise ConfigurationError(f"potential header needs n= and h=: {lines[0]!r}") from None
    xs, rows = [], []
    for ln in lines[1:]:
        if not ln.strip() or ln.startswith("#"):
            continue
        parts = ln.split(",")
        if len(parts) != 1 + 2 * n * n:
            raise DimensionError(f"expected {1 + 2 * n * n} columns, got {len(parts)}")
        xs.append(float(parts[0]))
        rows.append(_parse_complex(parts[1:]).reshape(n, n))
    x0 = xs[0] if xs else 0.0
    return HermitianPotential(np.array(rows), h, source=source or f"file:{path}", x0=x0)


def save_operator(op, path):
    """Dense complex matrix: one row per line, Re/Im pairs per column."""
    lines = [f"# role={op.role} N={op.N} n={op.n} h={_fmt(op.h)}"]
    for row in op.matrix:
        lines.append(",".join(_complex_row(row)))
    Path(path).write_text("\n".join(lines) + "\n")


def load_operator(path, validate=True):
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"operator file not found: {path}")
    lines = path.read_text().splitlines()
    head = _parse_header(lines[0])
    try:
        role, N, n, h = head["role"], int(head["N"]), int(head["n"]), float(head["h"])
    except (KeyError, ValueError):
        raise ConfigurationError(f"operator header needs role, N, n, h: {lines[0]!r}") from None
    rows = [_parse_complex(ln.split(",")) for ln in lines[1:] if ln.strip()]
    A = np.array(rows)
    if A.shape != (N * n, N * n):
        raise DimensionError(f"operator body has shape {A.shape}, header says {(N * n, N * n)}")
    if not validate:
        role = "other"
    return DiscreteOperator(A, h, n, role)


def save_wavefield(field, path, time_index=None):
    """Table ``x, t, Re/Im per channel``; optionally a single time slice."""
    u = field.values
    js = range(u.shape[1]) if time_index is None else [time_index]
    lines = ["# x,t," + ",".join(f"re{a},im{a}" for a in range(u.shape[2]))]
    for j in js:
        t = j * field.h
        for i in range(u.shape[0]):
            lines.append(",".join([_fmt(i * field.h), _fmt(t)] + _complex_row(u[i, j])))
    Path(path).write_text("\n".join(lines) + "\n")


def save_table(path, header, columns):
    """Write real columns as CSV with a ``#`` header."""
    cols = [np.asarray(c) for c in columns]
    lines = ["# " + ",".join(header)]
    for row in zip(*cols):
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    return obj


def dump_json(obj, path=None):
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text


def save_frame(frame, out_dir, prefix="frame"):
    """``K``/``K1`` tables plus a JSON block with ``G_K``, ``K'(0)``, ``K1'(0)``."""
    out_dir = Path(out_dir)
    x = frame.x
    header = ["x"] + [f"{p}{a}{b}" for a in range(frame.n) for b in range(frame.n) for p in ("re", "im")]
    for name, arr in (("K", frame.K), ("K1", frame.K1)):
        lines = ["# " + ",".join(header)]
        for xi, Ki in zip(x, arr):
            lines.append(",".join([_fmt(xi)] + _complex_row(Ki)))
        (out_dir / f"{prefix}_{name}.csv").write_text("\n".join(lines) + "\n")
    dump_json(
        {
            "G_K": frame.G_K,
            "Kp0": frame.Kp0,
            "K1p0": frame.K1p0,
            "K1p0_condition": frame.K1p0_condition,
            "h": frame.h,
            "X_max": float(x[-1]),
        },
        out_dir / f"{prefix}.json",
    )
