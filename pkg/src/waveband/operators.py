"""Control operator ``W``, connecting operator ``C = W* W``, reachable-set
projections and the eikonal operator."""
import numpy as np

from .core import (
    DiscreteOperator,
    NestFamily,
    NestPartition,
    control_cutoff_family,
    hermitian_part,
    spectral_norm,
    svd,
)
from .exceptions import ConfigurationError, GridError, NestViolationError
from .forward import _check_coverage, propagate, solve_goursat_kernel

RANK_TOL = 1e-8


def control_basis(grid):
    """Nodal hat controls: column ``p*n + a`` is ``e_a`` at ``t_{p+1}``."""
    N, n = grid.N, grid.n
    F = np.zeros((N + 1, n, N * n), dtype=complex)
    p = np.repeat(np.arange(N), n)
    a = np.tile(np.arange(n), N)
    F[p + 1, a, np.arange(N * n)] = 1.0
    return F


def assemble_control_operator(potential, grid, method="fd", kernel=None):
    """Matrix of ``f -> u^f(., T)`` restricted to ``x in [0, T)``.

    ``method="fd"`` propagates every basis control with the cross scheme.
    ``method="kernel"`` evaluates the transmutation representation with the
    step-``2h`` midpoint rule; it shares no code with the FD march, so data
    built this way do not inherit the reconstruction stencil.
    """
    N, n, h = grid.N, grid.n, grid.h
    if method == "fd":
        _check_coverage(potential, grid, needed_x=N + 1)
        u = propagate(potential.nodes(N + 2), control_basis(grid), h)
        W = u[:N].reshape(N * n, N * n)
    elif method == "kernel":
        if kernel is None:
            kernel = solve_goursat_kernel(potential, grid)
        elif kernel.N != N or not np.isclose(kernel.h, h):
            raise ConfigurationError("kernel was computed on a different grid")
        W4 = np.zeros((N, n, N, n), dtype=complex)
        i = np.arange(N)
        W4[i, :, N - 1 - i, :] = np.eye(n)
        ii, jj = np.triu_indices(N, 1)
        odd = (jj - ii) % 2 == 1
        ii, jj = ii[odd], jj[odd]
        # s_j pairs with control time T - s_j = t_{N-j}, stored at position N-1-j
        W4[ii, :, N - 1 - jj, :] += 2 * h * kernel.values[ii, jj]
        W = W4.reshape(N * n, N * n)
    else:
        raise ConfigurationError(f"unknown assembly method {method!r}")
    return DiscreteOperator(W, h, n, "W", {"method": method, "source": potential.source})


def compute_connecting(W):
    """``C = W* W``; weights ``h`` on both sides cancel."""
    A = W.matrix
    C = hermitian_part(A.conj().T @ A)
    return DiscreteOperator(C, W.h, W.n, "C", dict(W.meta))


def reflection(grid):
    """``(Rf)(x) = f(T - x)`` from the control layout to the state layout."""
    from .core import flip

    return flip(grid.N, grid.n)


def _control_columns(grid, m):
    """Flat indices of controls supported in ``[T - m h, T]``."""
    N, n = grid.N, grid.n
    return np.arange((N - m) * n, N * n)


def _range_basis(A, tol_abs):
    U, s, _ = svd(A)
    return U[:, s > tol_abs]


def reachable_projection(W, grid, s, tol=RANK_TOL):
    """Orthogonal projection onto ``W X_s F`` by singular-value thresholding."""
    m = grid.index_of(s)
    if not 0 <= m <= grid.N:
        raise GridError(f"s={s} outside [0, T]")
    A = W.matrix
    dim = A.shape[0]
    if m == 0:
        return DiscreteOperator(np.zeros((dim, dim), complex), W.h, W.n, "other")
    smax = spectral_norm(A)
    B = _range_basis(A[:, _control_columns(grid, m)], tol * smax)
    return DiscreteOperator(B @ B.conj().T, W.h, W.n, "other", {"s": m * grid.h, "rank": B.shape[1]})


def reachable_family(A, grid, tol=RANK_TOL, X_family=None):
    """Nested orthonormal basis of ``A X_s F`` for every grid time ``s``.

    New directions at each step are the thresholded left singular vectors
    of the freshly reached columns after two passes of projection against
    the basis built so far.
    """
    M = A.matrix if isinstance(A, DiscreteOperator) else np.asarray(A)
    X = X_family if X_family is not None else control_cutoff_family(grid)
    smax = spectral_norm(M)
    dim = M.shape[0]
    basis = np.zeros((dim, 0), dtype=complex)
    ranks = [0]
    for m in range(1, X.N + 1):
        cols = M @ X.block(m - 1, m)
        for _ in range(2):
            cols = cols - basis @ (basis.conj().T @ cols)
        new = _range_basis(cols, tol * smax)
        basis = np.hstack([basis, new])
        ranks.append(basis.shape[1])
    return NestFamily(basis, tuple(ranks))


def check_monotone(projections, tol=1e-8):
    """``P_a P_b = P_a`` for consecutive members; raises otherwise."""
    for k in range(1, len(projections)):
        Pa, Pb = projections[k - 1], projections[k]
        if np.max(np.abs(Pa @ Pb - Pa)) > tol:
            raise NestViolationError(f"projection family not monotone at knot {k}")


def assemble_eikonal(projections, partition, h=None, n=1):
    """``E = sum_k s_k (P_{s_k} - P_{s_{k-1}})``.

    ``projections`` is either a :class:`NestFamily` (indexed by grid step) or
    a list of dense projections, one per knot of ``partition``.
    """
    knots = partition.knots
    if isinstance(projections, NestFamily):
        dim = projections.basis.shape[0]
        E = np.zeros((dim, dim), dtype=complex)
        idx = partition.indices
        for k in range(1, len(idx)):
            B = projections.block(idx[k - 1], idx[k])
            E += knots[k] * (B @ B.conj().T)
    else:
        if len(projections) != len(knots):
            raise GridError("need one projection per knot")
        P = [np.asarray(getattr(p, "matrix", p)) for p in projections]
        check_monotone(P)
        E = sum(knots[k] * (P[k] - P[k - 1]) for k in range(1, len(P)))
    E = hermitian_part(E)
    return DiscreteOperator(E, partition.h if h is None else h, n, "E")


def eikonal_deviation_from_position(E, grid, partition):
    """``||E - diag(x_i) (x) I_n||`` with ``x_i`` the state-cell left ends."""
    x = np.repeat(np.arange(grid.N) * grid.h, grid.n)
    return spectral_norm(E.matrix - np.diag(x))


__all__ = [
    "NestPartition",
    "assemble_control_operator",
    "assemble_eikonal",
    "check_monotone",
    "compute_connecting",
    "control_basis",
    "eikonal_deviation_from_position",
    "reachable_family",
    "reachable_projection",
    "reflection",
]
