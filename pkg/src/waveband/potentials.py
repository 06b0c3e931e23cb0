"""Builtin potentials and the text grammar used by configs and the CLI.

Grammar::

    zero | const:<c> | diag:<c1>,...,<cn> | bump:<amp>,<center>,<width>
    | hbump:<amp>,<center>,<width> | file:<path>

``bump`` is ``(1 + amp*exp(-(x-center)**2/width)) * I``; ``hbump`` is a
2x2 Hermitian bump with complex off-diagonal coupling.
"""
import numpy as np

from .core import HermitianPotential
from .exceptions import ConfigurationError, CoverageError

HBUMP_BASE = np.diag([1.0, 2.0]).astype(complex)
HBUMP_SHAPE = np.array([[1.0, 0.5 + 0.5j], [0.5 - 0.5j, -0.5]])


def _floats(text, name):
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise ConfigurationError(f"bad numbers in {name!r} potential: {text!r}") from None


def potential_function(spec, n=1):
    """Return ``(callable x -> (len(x), n, n) array, n)`` for a builtin spec."""
    spec = spec.strip()
    kind, _, arg = spec.partition(":")
    if kind == "zero":
        return (lambda x: np.zeros(np.shape(x) + (n, n), complex)), n
    if kind == "const":
        c = _floats(arg, kind)[0]
        return (lambda x: c * np.broadcast_to(np.eye(n), np.shape(x) + (n, n)).astype(complex)), n
    if kind == "diag":
        cs = _floats(arg, kind)
        d = np.diag(cs).astype(complex)
        return (lambda x: np.broadcast_to(d, np.shape(x) + d.shape).copy()), len(cs)
    if kind in ("bump", "hbump"):
        vals = _floats(arg, kind)
        if len(vals) != 3 or vals[2] <= 0:
            raise ConfigurationError(f"{kind} needs amp,center,width>0, got {arg!r}")
        amp, center, width = vals

        def g(x):
            return amp * np.exp(-((np.asarray(x, float) - center) ** 2) / width)

        if kind == "bump":
            return (lambda x: (1 + g(x))[..., None, None] * np.eye(n)), n
        return (lambda x: HBUMP_BASE + g(x)[..., None, None] * HBUMP_SHAPE), 2
    raise ConfigurationError(f"unknown potential spec {spec!r}")


def make_potential(spec, grid):
    """Sample a builtin potential (or load ``file:<path>``) on ``grid``."""
    if spec.strip().startswith("file:"):
        from .io import load_potential

        q = load_potential(spec.strip()[5:])
        if not q.covers(grid):
            raise CoverageError(
                f"potential file covers [0, {q.X_max}] with h={q.h}, n={q.n}; "
                f"grid needs [0, {grid.X_max}] with h={grid.h}, n={grid.n}"
            )
        return q
    fn, n = potential_function(spec, grid.n)
    if n != grid.n:
        raise ConfigurationError(f"potential {spec!r} has n={n} but grid has n={grid.n}")
    return HermitianPotential(fn(grid.x), grid.h, source=spec.strip())


def channel_count(spec, default=1):
    spec = spec.strip()
    if spec.startswith("diag:"):
        return len(spec[5:].split(","))
    if spec.startswith("hbump:"):
        return 2
    return default


def tail_minimum(spec, n=1):
    """Smallest eigenvalue of ``q`` far from the origin (for ``X_max``)."""
    fn, n = potential_function(spec, n)
    return float(np.min(np.linalg.eigvalsh(fn(np.array([1e3]))[0])))
