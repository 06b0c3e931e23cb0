"""Triangular factorization ``C = V* V`` over the delayed-control nest.

Two routes: the polar factor of the diagonal of ``sqrt(C)`` applied to
``sqrt(C)``, and a Cholesky factorization on the reversed ordering. Both are
put in the same gauge (Hermitian positive diagonal blocks) so they can be
compared directly.
"""
import numpy as np
import scipy.linalg as sla

from .core import (
    DiscreteOperator,
    control_cutoff_family,
    diagonal_blocks,
    flip,
    hermitian_part,
    offblock_mass,
    spectral_norm,
    svd,
)
from .exceptions import FactorizationError, GridError, NotPSDError
from .nest_diagonal import default_schedule, diagonal_limit, make_partition, polar_unitary
from .operators import reachable_family

RIDGE = 1e-12


def _mat(A):
    return A.matrix if isinstance(A, DiscreteOperator) else np.asarray(A)


def operator_sqrt(C):
    """Positive square root by Hermitian eigendecomposition."""
    M = hermitian_part(_mat(C))
    lam, U = np.linalg.eigh(M)
    scale = max(abs(lam).max(), 1e-300)
    if lam[0] < -1e-6 * scale:
        raise NotPSDError(f"smallest eigenvalue {lam[0]:.3e} is below -1e-6 * ||C||")
    R = (U * np.sqrt(np.clip(lam, 0.0, None))) @ U.conj().T
    return DiscreteOperator(hermitian_part(R), C.h, C.n, "other", {"min_eig": float(lam[0])})


def _block_phase_gauge(Vr, n):
    """Left-multiply each ``n``-row block so its diagonal block becomes HPD."""
    Vr = Vr.copy()
    for b in range(Vr.shape[0] // n):
        s = slice(b * n, (b + 1) * n)
        U, _, Vh = svd(Vr[s, s])
        Vr[s, :] = (U @ Vh).conj().T @ Vr[s, :]
    return Vr


def factorize_cholesky_nest(C):
    """Nest-preserving factor via Cholesky on the time-reversed ordering.

    Controls are stored in increasing ``t`` and the nest occupies trailing
    coordinates, so the flip ``J`` makes it leading; there ``J C J = L L*``
    and ``V = J L* J`` is block upper triangular in the original order.
    """
    M = hermitian_part(_mat(C))
    N, n = C.N, C.n
    J = flip(N, n)
    s = np.linalg.eigvalsh(M)
    ridge = 0.0
    if s[0] < RIDGE * s[-1]:
        ridge = RIDGE * s[-1]
    try:
        L = np.linalg.cholesky(J @ M @ J + ridge * np.eye(M.shape[0]))
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(f"Cholesky breakdown: {exc}") from None
    V = J @ _block_phase_gauge(L.conj().T, n) @ J
    return DiscreteOperator(V, C.h, n, "V", {"route": "cholesky", "ridge": ridge})


def nest_leakage(V, grid, norm="hs"):
    """``max_s ||(I - X_s) V X_s||`` over every grid time ``s``.

    ``norm="hs"`` uses the Hilbert-Schmidt norm (weights cancel), which
    bounds the spectral norm (``norm="spectral"``) from above.
    """
    M = _mat(V)
    N, n = grid.N, grid.n
    worst = 0.0
    for m in range(1, N):
        c = (N - m) * n  # X_s keeps coordinates >= c
        block = M[:c, c:]
        val = np.linalg.norm(block) if norm == "hs" else spectral_norm(block)
        worst = max(worst, float(val))
    return worst


def factorize_formula(C, grid, schedule=None, tol=1e-8):
    """``V = Phi * sqrt(C)`` with ``Phi`` the polar factor of ``D*_{sqrt C}``.

    The ``P`` nest for ``sqrt(C)`` is the range family of
    ``sqrt(C) X_s``; the diagonal is taken at the finest level of
    ``schedule``. Returns ``(V, report)`` or raises when the diagonal
    diverges.
    """
    R = operator_sqrt(C)
    X = control_cutoff_family(grid)
    P = reachable_family(R, grid, tol=tol, X_family=X)
    D, report = diagonal_limit(R, grid, schedule or default_schedule(grid), P_family=P, X_family=X)
    if D is None:
        raise FactorizationError("diagonal of sqrt(C) did not converge")
    Phi, _ = polar_unitary(D)
    V = Phi.matrix @ R.matrix
    report.update(_factor_report(V, C, grid))
    return DiscreteOperator(V, C.h, C.n, "V", {"route": "formula", "delta": report["finest_delta"]}), report


def factorize_formula_at(C, grid, parts, tol=1e-8, _cache=None):
    """Formula route at a single partition level (for refinement studies)."""
    R, P, X = _cache if _cache is not None else formula_ingredients(C, grid, tol)
    from .nest_diagonal import diagonal_sum

    D = diagonal_sum(R, make_partition(grid, parts), P, X)
    Phi, _ = polar_unitary(D)
    V = Phi.matrix @ R.matrix
    return DiscreteOperator(V, C.h, C.n, "V", {"route": "formula", "delta": grid.T / parts})


def formula_ingredients(C, grid, tol=1e-8):
    R = operator_sqrt(C)
    X = control_cutoff_family(grid)
    return R, reachable_family(R, grid, tol=tol, X_family=X), X


def _factor_report(V, C, grid):
    Cm = _mat(C)
    res = np.linalg.norm(V.conj().T @ V - Cm) / np.linalg.norm(Cm)
    return {"residual": float(res), "leakage": nest_leakage(V, grid),
            "leakage_spectral": nest_leakage(V, grid, "spectral")}


def factor_residual(V, C):
    Vm, Cm = _mat(V), _mat(C)
    return float(np.linalg.norm(Vm.conj().T @ Vm - Cm) / np.linalg.norm(Cm))


def compare_factors(V1, V2, tol=1e-8):
    """Gauge ``U = V2 V1^{-1}`` between two factors of the same ``C``."""
    A, B = _mat(V1), _mat(V2)
    n = V1.n
    U = B @ np.linalg.inv(A)
    dim = U.shape[0]
    unitarity = spectral_norm(U.conj().T @ U - np.eye(dim))
    gram_gap = float(np.linalg.norm(A.conj().T @ A - B.conj().T @ B) / max(np.linalg.norm(A.conj().T @ A), 1e-300))
    mass = offblock_mass(U, n)
    return {
        "gram_difference": gram_gap,
        "unitarity_defect": unitarity,
        "is_unitary": bool(unitarity <= tol),
        "offblock_mass": mass,
        "U": U,
    }


def model_control_operator(V, grid):
    """``W~ = Y~ V Y`` with both reversals realized as the block flip."""
    J = flip(grid.N, grid.n)
    return DiscreteOperator(J @ _mat(V) @ J, grid.h, grid.n, "other", {"kind": "model_control"})


def orthogonalizer(Wt, W, grid):
    """``Phi^T`` with ``W~ = Phi^T W Y``, i.e. ``Phi^T = W~ Y W^{-1}``."""
    J = flip(grid.N, grid.n)
    Phi = _mat(Wt) @ J @ np.linalg.inv(_mat(W))
    return DiscreteOperator(Phi, grid.h, grid.n, "Phi")


def orthogonalizer_consistency(phi_short, grid_short, phi_long, grid_long):
    """Compare ``Phi^{T'}`` restricted to states on ``[0, T]`` with ``Phi^T``."""
    if not np.isclose(grid_short.h, grid_long.h) or grid_short.n != grid_long.n:
        raise GridError("horizons must share h and n")
    if grid_long.N < grid_short.N:
        raise GridError("second horizon must be the longer one")
    d = grid_short.dim
    A = _mat(phi_long)[:, :d]
    top, rest = A[:d], A[d:]
    disc = spectral_norm(top - _mat(phi_short))
    leak = spectral_norm(rest) if rest.size else 0.0
    return {"discrepancy": disc, "leakage": leak, "total": float(np.hypot(disc, leak)), "h": grid_short.h}


__all__ = [
    "compare_factors",
    "factor_residual",
    "factorize_cholesky_nest",
    "factorize_formula",
    "factorize_formula_at",
    "formula_ingredients",
    "model_control_operator",
    "nest_leakage",
    "operator_sqrt",
    "orthogonalizer",
    "orthogonalizer_consistency",
]
