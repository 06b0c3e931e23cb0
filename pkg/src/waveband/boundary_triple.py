"""Defect frame ``K``, its Dirichlet preimage ``K1`` and the boundary maps.

``K`` collects the square-summable solutions of ``-y'' + q y = 0`` with
``K(0) = I``; ``K1`` solves ``-K1'' + q K1 = K`` with ``K1(0) = 0``. For an
element ``y`` of the maximal domain

    y = y0 + K1 c + K d,   d = y(0),   c = K1'(0)^{-1} [y'(0) - K'(0) y(0)],

and the boundary maps are ``Gamma_1 y = -K y(0)``, ``Gamma_2 y = K c``.
"""
from dataclasses import dataclass

import numpy as np
import scipy.integrate as si
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import second_difference
from .exceptions import DefectFrameError, DegeneracyError, DimensionError, TruncationError

EPS_START = 1e-8
DECAY_TOL = 1e-6
COND_MAX = 1e12


@dataclass(frozen=True, eq=False)
class DefectFrame:
    x: np.ndarray
    K: np.ndarray  # (m, n, n)
    K1: np.ndarray  # (m, n, n)
    G_K: np.ndarray
    Kp0: np.ndarray
    K1p0: np.ndarray
    K1p0_condition: float
    h: float

    @property
    def n(self):
        return self.K.shape[1]

    @property
    def X_max(self):
        return float(self.x[-1])


@dataclass(frozen=True, eq=False)
class EndpointFunction:
    """Samples ``y(x_i)`` on ``[0, X_max]`` plus boundary data ``y(0), y'(0)``.

    Missing boundary data are read off the samples (fourth-order one-sided
    stencil for the derivative).
    """

    values: np.ndarray  # (m, n)
    h: float
    y0: np.ndarray = None
    yp0: np.ndarray = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim == 1:
            v = v[:, None]
        object.__setattr__(self, "values", v)
        if self.y0 is None:
            object.__setattr__(self, "y0", v[0].copy())
        if self.yp0 is None:
            object.__setattr__(self, "yp0", derivative_at_start(v, self.h))
        object.__setattr__(self, "y0", np.atleast_1d(np.asarray(self.y0, dtype=complex)))
        object.__setattr__(self, "yp0", np.atleast_1d(np.asarray(self.yp0, dtype=complex)))

    @classmethod
    def from_function(cls, fn, dfn, x, h):
        """Sample ``fn`` on ``x`` and take exact boundary data from ``fn, dfn``."""
        v = np.asarray(fn(x), dtype=complex)
        return cls(v, h, np.asarray(fn(np.array([0.0])), complex)[0], np.asarray(dfn(np.array([0.0])), complex)[0])


def _simpson(y, h):
    return si.simpson(y, dx=h, axis=0)


def gram(A, B, h):
    """``int A(x)^H B(x) dx`` for stacks of matrices or vectors."""
    if A.ndim == 2:
        return _simpson(np.einsum("xa,xa->x", A.conj(), B), h)
    return _simpson(np.einsum("xab,xac->xbc", A.conj(), B), h)


def pair(f, g, h):
    """``(f, g) = int g^H f``."""
    return complex(_simpson(np.einsum("xa,xa->x", g.conj(), f), h))


def _sqrtm_h(Aq):
    lam, U = np.linalg.eigh(0.5 * (Aq + Aq.conj().T))
    return (U * np.sqrt(np.clip(lam, 0, None))) @ U.conj().T


def _decaying_solution(potential, x):
    """Backward integration from ``X_max`` seeded on the decaying mode."""
    n = potential.n
    X = x[-1]
    qX = potential.at(np.array([X]))[0]
    lam = np.linalg.eigvalsh(0.5 * (qX + qX.conj().T))
    if lam[0] <= 0:
        raise DefectFrameError(f"q(X_max) is not positive definite (min eigenvalue {lam[0]:.3e})")
    Y0 = EPS_START * np.eye(n, dtype=complex)
    Yp0 = -_sqrtm_h(qX) @ Y0

    def rhs(t, z):
        Y = z[: n * n].reshape(n, n)
        Yp = z[n * n :].reshape(n, n)
        return np.concatenate([Yp.ravel(), (potential.at(np.array([t]))[0] @ Y).ravel()])

    z0 = np.concatenate([Y0.ravel(), Yp0.ravel()])
    sol = si.solve_ivp(rhs, (X, 0.0), z0, t_eval=x[::-1], method="DOP853", rtol=1e-12, atol=1e-30)
    if not sol.success:
        raise DefectFrameError(f"backward integration failed: {sol.message}")
    Z = sol.y[:, ::-1].T
    return Z[:, : n * n].reshape(-1, n, n), Z[:, n * n :].reshape(-1, n, n)


def _dirichlet_preimage(q, K, h):
    """Numerov solve of ``-Y'' + q Y = K`` with ``Y(0) = Y(X_max) = 0``.

    Fourth order, so ``K1'(0)`` is not the accuracy bottleneck of the
    boundary maps.
    """
    m, n, _ = K.shape
    inner = m - 2
    I = np.eye(n)
    qi = q[1:-1]
    diag = sp.block_diag([2.0 / h**2 * I + (10.0 / 12.0) * qi[i] for i in range(inner)], format="csr")
    lower = sp.block_diag([-I / h**2 + q[i] / 12.0 for i in range(1, inner)], format="csr")  # y_{i-1}
    upper = sp.block_diag([-I / h**2 + q[i] / 12.0 for i in range(2, inner + 1)], format="csr")  # y_{i+1}
    A = diag.tolil()
    A[n:, : (inner - 1) * n] += lower
    A[: (inner - 1) * n, n:] += upper
    rhs = (K[:-2] + 10.0 * K[1:-1] + K[2:]) / 12.0
    Y = np.zeros_like(K)
    Y[1:-1] = spla.splu(A.tocsc()).solve(np.ascontiguousarray(rhs.reshape(inner * n, n))).reshape(inner, n, n)
    return Y


def derivative_at_start(f, h):
    """Fourth-order one-sided derivative at the first node."""
    return (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h)


def compute_defect_frame(potential, grid=None):
    """Frame on the whole span of ``potential`` (``[0, X_max]`` with its step)."""
    if grid is not None and not np.isclose(grid.h, potential.h):
        raise DimensionError("frame grid and potential step differ")
    if abs(potential.x0) > 1e-12:
        raise DefectFrameError("potential must start at x = 0")
    h, n = potential.h, potential.n
    x = potential.x
    q = potential.samples
    tail = q[len(q) // 2 :]
    if np.min(np.linalg.eigvalsh(0.5 * (tail + np.conj(np.swapaxes(tail, 1, 2))))) <= 0:
        raise DefectFrameError("q is not uniformly positive on the tail; no decaying frame is certified")
    Y, Yp = _decaying_solution(potential, x)
    if np.linalg.cond(Y[0]) > COND_MAX:
        raise DegeneracyError("K(0) is numerically singular")
    inv0 = np.linalg.inv(Y[0])
    K = Y @ inv0
    K[0] = np.eye(n)
    if np.linalg.norm(K[-1], 2) > DECAY_TOL:
        raise DefectFrameError(f"||K(X_max)|| = {np.linalg.norm(K[-1], 2):.2e}: no decay by X_max")
    Kp0 = Yp[0] @ inv0
    K1 = _dirichlet_preimage(q, K, h)
    K1p0 = derivative_at_start(K1, h)
    G = gram(K, K, h)
    G = 0.5 * (G + G.conj().T)
    return DefectFrame(x, K, K1, G, Kp0, K1p0, float(np.linalg.cond(K1p0)), h)


def frame_residuals(frame, potential):
    """Max interior residuals of ``-K'' + qK`` (plain stencil) and of the
    ``K1`` problem in the Numerov form it was solved in."""
    q = potential.samples[: len(frame.x)]
    h = frame.h
    rK = -second_difference(frame.K, h) + q @ frame.K
    Y, K = frame.K1, frame.K
    g = q @ Y - K
    rK1 = -(Y[2:] - 2 * Y[1:-1] + Y[:-2]) / h**2 + (g[2:] + 10 * g[1:-1] + g[:-2]) / 12
    return float(np.abs(rK[1:-1]).max()), float(np.abs(rK1).max())


def _check_frame_len(y, frame):
    if len(y.values) != len(frame.x):
        raise DimensionError(f"function has {len(y.values)} samples, frame has {len(frame.x)}")


def gamma1(y, frame):
    """``Gamma_1 y = -K(.) y(0)``; returns ``(samples, d)`` with ``d = y(0)``."""
    d = np.asarray(y.y0, dtype=complex)
    return -frame.K @ d, d


def boundary_coefficient(y, frame):
    """``c = K1'(0)^{-1} [y'(0) - K'(0) y(0)]``."""
    if frame.K1p0_condition > COND_MAX:
        raise DegeneracyError(f"K1'(0) condition number {frame.K1p0_condition:.2e} exceeds {COND_MAX:.0e}")
    return np.linalg.solve(frame.K1p0, y.yp0 - frame.Kp0 @ y.y0)


def gamma2(y, frame):
    """``Gamma_2 y = K(.) c``; returns ``(samples, c)``."""
    c = boundary_coefficient(y, frame)
    return frame.K @ c, c


def minimal_operator(y, potential):
    """``-y'' + q y`` by the second-difference stencil."""
    q = potential.samples[: len(y.values)]
    return -second_difference(y.values, y.h) + np.einsum("xab,xb->xa", q, y.values)


def green_residual(u, v, potential, frame, grid=None):
    """``|(L u, v) - (u, L v) - [(G1 u, G2 v) - (G2 u, G1 v)]|``."""
    for y in (u, v):
        _check_frame_len(y, frame)
        scale = max(np.abs(y.values).max(), 1e-300)
        if np.abs(y.values[-1]).max() > DECAY_TOL * scale:
            raise TruncationError("input does not decay by X_max")
    h = frame.h
    lhs = pair(minimal_operator(u, potential), v.values, h) - pair(u.values, minimal_operator(v, potential), h)
    _, cu = gamma2(u, frame)
    _, cv = gamma2(v, frame)
    G = frame.G_K
    # (G1 u, G2 v) = -c_v^H G u0 ;  (G2 u, G1 v) = -v0^H G c_u
    rhs = -np.vdot(cv, G @ u.y0) + np.vdot(v.y0, G @ cu)
    return float(abs(lhs - rhs))


def vishik_decompose(y, frame, potential=None, grid=None):
    """``y = y0 + K1 c + K d``; returns ``(y0, K1 c, K d, c, d)``.

    Derivatives at zero are all taken with the same one-sided stencil, so the
    reconstructed ``y0`` meets ``y0(0) = y0'(0) = 0`` to roundoff.
    """
    _check_frame_len(y, frame)
    h = frame.h
    d = y.values[0]
    Kp = derivative_at_start(frame.K, h)
    yp = derivative_at_start(y.values, h)
    if frame.K1p0_condition > COND_MAX:
        raise DegeneracyError(f"K1'(0) condition number {frame.K1p0_condition:.2e} exceeds {COND_MAX:.0e}")
    c = np.linalg.solve(frame.K1p0, yp - Kp @ d)
    g = frame.K1 @ c
    hpart = frame.K @ d
    y0 = y.values - g - hpart
    return y0, g, hpart, c, d


def frame_X_max(T, tail_min, floor=None):
    """``T + 15 / sqrt(q_tail)``: the decaying tail drops below ``1e-6``."""
    if tail_min <= 0:
        raise DefectFrameError("tail of q is not positive; no decaying frame")
    X = T + 15.0 / np.sqrt(tail_min)
    return X if floor is None else max(X, floor)


__all__ = [
    "DefectFrame",
    "EndpointFunction",
    "boundary_coefficient",
    "compute_defect_frame",
    "frame_X_max",
    "frame_residuals",
    "gamma1",
    "gamma2",
    "gram",
    "green_residual",
    "minimal_operator",
    "pair",
    "vishik_decompose",
]
