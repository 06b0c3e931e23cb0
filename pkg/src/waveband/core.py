"""Discretization types, quadrature, stencils and Hermitian-matrix helpers.

Conventions used across the package
-----------------------------------
* Space and time share one step ``h``; ``T = N * h``.
* A control on ``[0, T]`` is stored by its node values at ``t_1 .. t_N``
  (``f(t_0) = 0`` always). Sample ``p`` stands for the cell ``(t_p, t_{p+1}]``.
* A state on ``[0, T]`` is stored at ``x_0 .. x_{N-1}``; sample ``i`` stands
  for the cell ``[x_i, x_{i+1})``. Model-space functions use the same layout
  in the variable ``tau``.
* Operator matrices are ``(N*n) x (N*n)`` with the channel index running
  fastest (row ``i*n + a``). Both sides carry the quadrature weight ``h``, so
  adjoints are plain conjugate transposes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionError, GridError, HermitianError

HERMITIAN_INPUT_TOL = 1e-12
HERMITIAN_OPERATOR_TOL = 1e-10

ROLES = ("W", "C", "V", "D", "Phi", "E", "Lmodel", "Q", "other")


@dataclass(frozen=True)
class Grid:
    """Uniform characteristic-aligned grid (``dx = dt = h``)."""

    h: float
    N: int
    n: int = 1
    X_max: float | None = None

    def __post_init__(self):
        if not self.h > 0:
            raise GridError(f"step must be positive, got {self.h}")
        if int(self.N) != self.N or self.N < 8:
            raise GridError(f"need N >= 8 interior steps, got {self.N}")
        if int(self.n) != self.n or self.n < 1:
            raise GridError(f"channel count must be >= 1, got {self.n}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "n", int(self.n))
        if self.X_max is None:
            object.__setattr__(self, "X_max", self.T + 2 * self.h)
        elif self.X_max < self.T - 1e-12:
            raise GridError(f"X_max={self.X_max} must be >= T={self.T}")

    @classmethod
    def from_horizon(cls, N, T=1.0, n=1, X_max=None):
        return cls(h=T / N, N=N, n=n, X_max=X_max)

    @property
    def T(self):
        return self.N * self.h

    @property
    def M(self):
        """Index of the last spatial node on ``[0, X_max]``."""
        return int(math.ceil(self.X_max / self.h - 1e-9))

    @property
    def x(self):
        return np.arange(self.M + 1) * self.h

    @property
    def t(self):
        return np.arange(self.N + 1) * self.h

    @property
    def dim(self):
        return self.N * self.n

    def index_of(self, s):
        """Grid index of time ``s``; raises if ``s`` is not a node."""
        k = s / self.h
        r = round(k)
        if abs(k - r) > 1e-9 * max(1.0, abs(k)):
            raise GridError(f"time {s} is not on the grid with h={self.h}")
        return int(r)

    def with_X_max(self, X_max):
        return Grid(h=self.h, N=self.N, n=self.n, X_max=X_max)

    def refined(self, factor=2):
        return Grid(h=self.h / factor, N=self.N * factor, n=self.n, X_max=self.X_max)


@dataclass(frozen=True, eq=False)
class HermitianPotential:
    """Samples ``q_i`` of an ``n x n`` Hermitian matrix field at ``x0 + i*h``."""

    samples: np.ndarray
    h: float
    source: str = "file"
    x0: float = 0.0

    def __post_init__(self):
        q = np.asarray(self.samples, dtype=complex)
        if q.ndim != 3 or q.shape[1] != q.shape[2]:
            raise DimensionError(f"samples must have shape (m, n, n), got {q.shape}")
        if not np.all(np.isfinite(q)):
            raise HermitianError("potential samples must be finite")
        dev = np.max(np.abs(q - np.conj(np.swapaxes(q, 1, 2)))) if q.size else 0.0
        if dev > HERMITIAN_INPUT_TOL * max(1.0, np.max(np.abs(q))):
            raise HermitianError(f"potential is not Hermitian (deviation {dev:.3e})")
        q.setflags(write=False)
        object.__setattr__(self, "samples", q)

    @property
    def n(self):
        return self.samples.shape[1]

    @property
    def x(self):
        return self.x0 + np.arange(len(self.samples)) * self.h

    @property
    def X_max(self):
        return self.x0 + (len(self.samples) - 1) * self.h

    def covers(self, grid):
        return (
            abs(self.x0) < 1e-12
            and math.isclose(self.h, grid.h, rel_tol=1e-12)
            and len(self.samples) >= grid.M + 1
            and self.n == grid.n
        )

    def nodes(self, count):
        """First ``count`` samples; the caller has checked coverage."""
        return self.samples[:count]

    def at(self, x):
        """Piecewise-linear interpolation of the samples at points ``x``."""
        x = np.asarray(x, dtype=float)
        pos = (x - self.x0) / self.h
        lo = np.clip(np.floor(pos).astype(int), 0, len(self.samples) - 2)
        frac = (pos - lo)[..., None, None]
        return (1 - frac) * self.samples[lo] + frac * self.samples[lo + 1]

    def half_grid(self, count):
        """Values on the half-step grid ``x = r*h/2``, ``r = 0 .. 2*(count-1)``."""
        q = self.samples[:count]
        out = np.empty((2 * count - 1,) + q.shape[1:], dtype=complex)
        out[0::2] = q
        out[1::2] = 0.5 * (q[:-1] + q[1:])
        return out


@dataclass(frozen=True, eq=False)
class BoundaryControl:
    """Node values ``f(t_0) .. f(t_N)`` of a ``C^n``-valued control."""

    samples: np.ndarray
    h: float
    smooth: bool = False

    def __post_init__(self):
        f = np.asarray(self.samples, dtype=complex)
        if f.ndim == 1:
            f = f[:, None]
        if f.ndim != 2 or len(f) < 3:
            raise DimensionError(f"control samples must have shape (N+1, n), got {f.shape}")
        if self.smooth and not self._vanishes_at_start(f, self.h):
            raise DimensionError("control flagged smooth but f(0), f'(0) do not vanish")
        f.setflags(write=False)
        object.__setattr__(self, "samples", f)

    @staticmethod
    def _vanishes_at_start(f, h):
        scale = max(1.0, float(np.max(np.abs(f))))
        if np.max(np.abs(f[0])) > 1e-12 * scale:
            return False
        curv = np.max(np.abs(f[:-2] - 2 * f[1:-1] + f[2:]))
        return np.max(np.abs(f[1] - f[0])) <= curv + 1e-12 * scale

    @classmethod
    def from_function(cls, fn, grid, channel_vector=None, smooth=None):
        """Sample ``fn(t) * v`` on the grid nodes ``t_0 .. t_N``."""
        v = np.zeros(grid.n, dtype=complex)
        if channel_vector is None:
            v[0] = 1.0
        else:
            v[:] = channel_vector
        vals = np.asarray(fn(grid.t), dtype=complex)[:, None] * v[None, :]
        if smooth is None:
            smooth = cls._vanishes_at_start(vals, grid.h)
        return cls(vals, grid.h, smooth=smooth)

    @property
    def n(self):
        return self.samples.shape[1]

    @property
    def N(self):
        return len(self.samples) - 1

    def vector(self):
        """Flattened ``t_1 .. t_N`` values, the layout operators act on."""
        return self.samples[1:].reshape(-1)

    def shifted(self, m):
        """Delay by ``m`` steps (zero-padded, truncated at ``T``)."""
        f = np.zeros_like(self.samples)
        if m < len(f):
            f[m:] = self.samples[: len(f) - m]
        return BoundaryControl(f, self.h, smooth=self.smooth)


@dataclass(frozen=True, eq=False)
class WaveField:
    """Values ``u(x_i, t_j)`` with shape ``(M+1, N+1, n)``."""

    values: np.ndarray
    h: float

    @property
    def x(self):
        return np.arange(self.values.shape[0]) * self.h

    @property
    def t(self):
        return np.arange(self.values.shape[1]) * self.h

    def at_time(self, j):
        return self.values[:, j]

    @property
    def final(self):
        return self.values[:, -1]


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Dense matrix acting between sampled ``C^n``-valued functions."""

    matrix: np.ndarray
    h: float
    n: int
    role: str = "other"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        A = np.asarray(self.matrix, dtype=complex)
        if A.ndim != 2 or A.shape[0] % self.n or A.shape[1] % self.n:
            raise DimensionError(f"matrix shape {A.shape} not divisible by n={self.n}")
        if self.role not in ROLES:
            raise DimensionError(f"unknown role {self.role!r}")
        if self.role in ("C", "Q"):
            dev = hermitian_deviation(A)
            if dev > HERMITIAN_OPERATOR_TOL * max(1.0, np.max(np.abs(A))):
                raise HermitianError(f"role {self.role} operator not Hermitian ({dev:.3e})")
        object.__setattr__(self, "matrix", A)

    @property
    def N(self):
        return self.matrix.shape[1] // self.n

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, other):
        if isinstance(other, DiscreteOperator):
            return DiscreteOperator(self.matrix @ other.matrix, self.h, self.n)
        return self.matrix @ other

    def adjoint(self):
        return DiscreteOperator(self.matrix.conj().T, self.h, self.n, _adjoint_role(self.role))

    def norm(self):
        return float(np.linalg.norm(self.matrix, 2))


def _adjoint_role(role):
    return role if role in ("C", "Q", "E") else "other"


@dataclass(frozen=True)
class NestPartition:
    """Grid-aligned knots ``0 = s_0 < ... < s_K = T`` stored as step counts."""

    indices: tuple
    h: float

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(idx) < 2 or idx[0] != 0 or any(b <= a for a, b in zip(idx, idx[1:])):
            raise GridError(f"knots must start at 0 and increase strictly: {idx}")
        object.__setattr__(self, "indices", idx)

    @property
    def knots(self):
        return np.array(self.indices) * self.h

    @property
    def delta(self):
        return max(b - a for a, b in zip(self.indices, self.indices[1:])) * self.h

    def __len__(self):
        return len(self.indices) - 1


def inner_product(f, g, grid):
    """``h * sum <f_i, g_i>`` (linear in ``f``, antilinear in ``g``)."""
    f = np.asarray(f)
    g = np.asarray(g)
    if f.shape != g.shape:
        raise DimensionError(f"shape mismatch {f.shape} vs {g.shape}")
    h = grid.h if isinstance(grid, Grid) else float(grid)
    return complex(h * np.vdot(g, f))


def second_difference(f, grid):
    """Second derivative stencil along axis 0, one-sided at both ends.

    Interior nodes use ``(f[i-1] - 2 f[i] + f[i+1]) / h**2``; the end nodes
    use the second-order four-point formula, so quadratics are exact.
    """
    f = np.asarray(f)
    if len(f) < 3:
        raise DimensionError("second_difference needs at least 3 samples")
    h = grid.h if isinstance(grid, Grid) else float(grid)
    out = np.empty(f.shape, dtype=np.result_type(f, float))
    out[1:-1] = (f[:-2] - 2 * f[1:-1] + f[2:]) / h**2
    if len(f) == 3:
        out[0] = out[-1] = out[1]
        return out
    out[0] = (2 * f[0] - 5 * f[1] + 4 * f[2] - f[3]) / h**2
    out[-1] = (2 * f[-1] - 5 * f[-2] + 4 * f[-3] - f[-4]) / h**2
    return out


def first_derivative_at_start(f, h):
    """Second-order one-sided derivative at the first node."""
    return (-3 * f[0] + 4 * f[1] - f[2]) / (2 * h)


def control_second_difference(N, h, n):
    """Matrix of ``d^2/dt^2`` on the ``t_1 .. t_N`` layout.

    ``f(t_0) = 0`` closes the stencil at the low end, the high end is
    one-sided. Reflected (``J D J``) it is the model-space ``d^2/dtau^2``.
    """
    D = np.zeros((N, N))
    i = np.arange(N - 1)
    D[i, i] = -2.0
    D[i, i + 1] = 1.0
    D[i[1:], i[1:] - 1] = 1.0
    D[N - 1, N - 4 : N] = [-1.0, 4.0, -5.0, 2.0]
    return np.kron(D / h**2, np.eye(n))


def flip(N, n):
    """Block reversal ``J``: time reflection on the sample layout."""
    return np.kron(np.eye(N)[::-1], np.eye(n))


def hermitian_part(A):
    return 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))


def hermitian_deviation(A):
    A = np.asarray(A)
    return float(np.max(np.abs(A - np.conj(np.swapaxes(A, -1, -2))))) if A.size else 0.0


def diagonal_blocks(A, n):
    """``(N, n, n)`` array of the diagonal ``n x n`` blocks of ``A``."""
    N = A.shape[0] // n
    B = A.reshape(N, n, N, n)
    return B[np.arange(N), :, np.arange(N), :]


def block_diagonal(blocks):
    N, n, _ = blocks.shape
    out = np.zeros((N, n, N, n), dtype=blocks.dtype)
    out[np.arange(N), :, np.arange(N), :] = blocks
    return out.reshape(N * n, N * n)


def offblock_mass(A, n):
    """Share of squared Frobenius norm outside the diagonal ``n x n`` blocks."""
    total = float(np.sum(np.abs(A) ** 2))
    if total == 0.0:
        return 0.0
    diag = float(np.sum(np.abs(diagonal_blocks(A, n)) ** 2))
    return max(total - diag, 0.0) / total


def fix_svd_signs(U, Vh):
    """Make the first nonzero entry of each left singular vector real positive."""
    U = U.copy()
    Vh = Vh.copy()
    for k in range(U.shape[1]):
        col = U[:, k]
        nz = np.flatnonzero(np.abs(col) > 1e-14 * np.max(np.abs(col)))
        if nz.size:
            ph = col[nz[0]] / abs(col[nz[0]])
            U[:, k] /= ph
            Vh[k, :] *= ph
    return U, Vh


def svd(A):
    U, s, Vh = np.linalg.svd(A, full_matrices=False)
    U, Vh = fix_svd_signs(U, Vh)
    return U, s, Vh


def spectral_norm(A):
    return float(np.linalg.norm(A, 2)) if A.size else 0.0


@dataclass(frozen=True, eq=False)
class NestFamily:
    """Increasing projections ``P_{m h}``, ``m = 0 .. N``, as one nested basis.

    ``P_{m h} = B[:, :ranks[m]] B[:, :ranks[m]]^H``. Storing the basis rather
    than ``N + 1`` dense projections keeps partition sums at ``O(dim^3)``.
    """

    basis: np.ndarray
    ranks: tuple

    def __post_init__(self):
        r = tuple(int(v) for v in self.ranks)
        if r[0] != 0 or any(b < a for a, b in zip(r, r[1:])) or r[-1] > self.basis.shape[1]:
            raise GridError(f"ranks must start at 0 and be nondecreasing: {r[:5]}...")
        object.__setattr__(self, "ranks", r)

    @property
    def N(self):
        return len(self.ranks) - 1

    def projection(self, m):
        B = self.basis[:, : self.ranks[m]]
        return B @ B.conj().T

    def block(self, m0, m1):
        """Orthonormal basis of ``(P_{m1 h} - P_{m0 h})``."""
        return self.basis[:, self.ranks[m0] : self.ranks[m1]]

    def is_cutoff(self):
        return bool(getattr(self, "_cutoff", False))


def _cutoff_family(order, N, n):
    dim = N * n
    basis = np.zeros((dim, dim))
    basis[order, np.arange(dim)] = 1.0
    fam = NestFamily(basis, tuple(m * n for m in range(N + 1)))
    object.__setattr__(fam, "_cutoff", True)
    object.__setattr__(fam, "order", np.asarray(order))
    return fam


def state_cutoff_family(grid):
    """``P_s``: states supported in ``[0, s]`` (cells in increasing ``x``)."""
    return _cutoff_family(np.arange(grid.dim), grid.N, grid.n)


def control_cutoff_family(grid):
    """``X_s``: controls supported in ``[T - s, T]`` (cells from ``t = T`` down)."""
    N, n = grid.N, grid.n
    order = (np.arange(N)[::-1, None] * n + np.arange(n)[None, :]).ravel()
    return _cutoff_family(order, N, n)
