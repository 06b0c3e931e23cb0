"""Input checks for the estimator front end (complex-aware, so sklearn's
``check_array`` is not used for operator data)."""
import numpy as np

from .exceptions import DimensionError, HermitianError

HERMITIAN_TOL = 1e-10


def check_operator_matrix(A, n, hermitian=False):
    """Square finite complex matrix whose size is a multiple of ``n``."""
    A = np.asarray(getattr(A, "matrix", A), dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {A.shape}")
    if A.shape[0] % n:
        raise DimensionError(f"size {A.shape[0]} is not a multiple of n={n}")
    if not np.all(np.isfinite(A)):
        raise DimensionError("matrix has non-finite entries")
    if hermitian:
        dev = np.max(np.abs(A - A.conj().T))
        if dev > HERMITIAN_TOL * max(1.0, np.max(np.abs(A))):
            raise HermitianError(f"matrix is not Hermitian (deviation {dev:.2e})")
    return A


def check_controls(F, N, n):
    """Controls as rows: accepts ``(N*n,)``, ``(k, N*n)`` or ``(k, N, n)``."""
    F = np.asarray(F, dtype=complex)
    if F.ndim == 1:
        F = F[None, :]
    if F.ndim == 3:
        F = F.reshape(F.shape[0], -1)
    if F.ndim != 2 or F.shape[1] != N * n:
        raise DimensionError(f"controls must have N*n={N * n} samples per row, got shape {F.shape}")
    if not np.all(np.isfinite(F)):
        raise DimensionError("controls have non-finite entries")
    return F


def check_positive_int(value, name, minimum=1):
    if int(value) != value or value < minimum:
        raise DimensionError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)
