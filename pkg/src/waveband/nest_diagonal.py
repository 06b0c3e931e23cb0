"""Partition sums over nests, the diagonal limit and polar factors."""
import numpy as np

from .core import (
    DiscreteOperator,
    NestFamily,
    NestPartition,
    control_cutoff_family,
    flip,
    spectral_norm,
    state_cutoff_family,
    svd,
)
from .exceptions import DimensionError, GridError, PolarError


def make_partition(grid, parts):
    """Uniform partition of ``[0, T]`` into ``parts`` pieces."""
    parts = int(parts)
    if parts < 1 or grid.N % parts:
        raise GridError(f"parts={parts} does not divide N={grid.N}")
    step = grid.N // parts
    return NestPartition(tuple(range(0, grid.N + 1, step)), grid.h)


def default_schedule(grid, coarsest=8):
    """Dyadic part counts ``coarsest, 2*coarsest, ...`` up to ``N``."""
    parts = []
    p = coarsest
    while p <= grid.N:
        if grid.N % p == 0:
            parts.append(p)
        p *= 2
    if not parts or parts[-1] != grid.N:
        parts.append(grid.N)
    return parts


def control_cutoff(s, grid):
    """Projection ``X_s`` keeping control samples with ``t >= T - s``."""
    m = grid.index_of(s)
    if not 0 <= m <= grid.N:
        raise GridError(f"s={s} outside [0, T]")
    keep = np.zeros(grid.dim)
    keep[(grid.N - m) * grid.n :] = 1.0
    return DiscreteOperator(np.diag(keep).astype(complex), grid.h, grid.n, "other", {"s": m * grid.h})


def _increments(family, partition):
    """Orthonormal bases of ``Delta_k`` for every partition cell."""
    idx = partition.indices
    if isinstance(family, NestFamily):
        if idx[-1] > family.N:
            raise DimensionError(f"family has {family.N} steps, partition needs {idx[-1]}")
        return [family.block(a, b) for a, b in zip(idx, idx[1:])]
    mats = [np.asarray(getattr(p, "matrix", p)) for p in family]
    if len(mats) != len(idx):
        raise DimensionError(f"{len(mats)} projections for {len(idx)} knots")
    return [mats[k] - mats[k - 1] for k in range(1, len(mats))]


def diagonal_sum(A, partition, P_family, X_family):
    """``sum_k dP_k A dX_k`` over the cells of ``partition``."""
    M = A.matrix if isinstance(A, DiscreteOperator) else np.asarray(A)
    dP = _increments(P_family, partition)
    dX = _increments(X_family, partition)
    D = np.zeros(M.shape, dtype=complex)
    basis_form = isinstance(P_family, NestFamily) and isinstance(X_family, NestFamily)
    for p, x in zip(dP, dX):
        if basis_form:
            D += p @ ((p.conj().T @ M @ x) @ x.conj().T)
        else:
            D += p @ M @ x
    h = A.h if isinstance(A, DiscreteOperator) else partition.h
    n = A.n if isinstance(A, DiscreteOperator) else 1
    return DiscreteOperator(D, h, n, "D", {"delta": partition.delta})


def intertwining_defect(D, partition, P_family, X_family):
    """``max_k ||P_{s_k} D - D X_{s_k}||`` over the knots."""
    M = D.matrix
    worst = 0.0
    for m in partition.indices:
        P = P_family.projection(m)
        X = X_family.projection(m)
        worst = max(worst, spectral_norm(P @ M - M @ X))
    return worst


def diagonal_limit(A, grid, schedule=None, P_family=None, X_family=None,
                   reference=None, omega=None, tol=1e-12, growth=1.1):
    """Partition sums along a refining schedule, with a convergence report.

    ``reference`` (e.g. the reflection for ``A = W``) and ``omega`` only feed
    the report. Returns ``(D, report)``; ``D`` is ``None`` when a level
    difference exceeds the previous one by more than the factor ``growth``
    (the last step onto ``delta = h`` may plateau, so strict decrease is
    too brittle a test).
    """
    schedule = list(schedule or default_schedule(grid))
    if sorted(schedule) != schedule:
        raise GridError("schedule must refine monotonically")
    P_family = P_family if P_family is not None else state_cutoff_family(grid)
    X_family = X_family if X_family is not None else control_cutoff_family(grid)
    M = A.matrix if isinstance(A, DiscreteOperator) else np.asarray(A)
    scale = max(spectral_norm(M), 1e-300)
    levels, prev, D = [], None, None
    for parts in schedule:
        part = make_partition(grid, parts)
        D = diagonal_sum(A, part, P_family, X_family)
        s = np.linalg.svd(D.matrix, compute_uv=False)
        entry = {"parts": parts, "delta": part.delta, "sigma_min": float(s[-1]), "sigma_max": float(s[0])}
        if reference is not None:
            entry["dist_reference"] = spectral_norm(D.matrix - reference)
        if omega is not None:
            entry["bound"] = float(np.sqrt(omega) * part.delta)
        if prev is not None:
            entry["level_difference"] = spectral_norm(D.matrix - prev)
        prev = D.matrix
        levels.append(entry)
    diffs = [lv["level_difference"] for lv in levels[1:]]
    diverged = any(b > growth * a and b > tol * scale for a, b in zip(diffs, diffs[1:]))
    report = {
        "levels": levels,
        "converged": not diverged,
        "sigma_min": levels[-1]["sigma_min"],
        "finest_delta": levels[-1]["delta"],
    }
    if diverged:
        return None, report
    return D, report


def polar_unitary(D, rank_tol=1e-10):
    """Polar decomposition ``D* = Phi |D*|`` via SVD.

    Returns ``(Phi, |D*|)``.
    """
    M = D.matrix if isinstance(D, DiscreteOperator) else np.asarray(D)
    U, s, Vh = svd(M.conj().T)
    if s.size == 0 or s[-1] <= rank_tol * s[0]:
        raise PolarError(f"operator is rank deficient (sigma_min/sigma_max = {s[-1] / s[0]:.3e})")
    Phi = U @ Vh
    absD = Vh.conj().T @ (s[:, None] * Vh)
    absD = 0.5 * (absD + absD.conj().T)
    h = getattr(D, "h", 1.0)
    n = getattr(D, "n", 1)
    return DiscreteOperator(Phi, h, n, "Phi"), DiscreteOperator(absD, h, n, "other")


def reflection_operator(grid):
    """``(R f)(x) = f(T - x)`` as a :class:`DiscreteOperator`."""
    return DiscreteOperator(flip(grid.N, grid.n).astype(complex), grid.h, grid.n, "other")


__all__ = [
    "control_cutoff",
    "default_schedule",
    "diagonal_limit",
    "diagonal_sum",
    "intertwining_defect",
    "make_partition",
    "polar_unitary",
    "reflection_operator",
]
