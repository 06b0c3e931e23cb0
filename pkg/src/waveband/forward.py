"""Forward boundary-control problem, solved two independent ways.

``u_tt - u_xx + q(x) u = 0`` on ``x > 0``, zero initial data, ``u(0, t) = f(t)``.

* :func:`solve_wave_fd` marches the explicit cross scheme with ``dt = dx = h``.
  At CFL 1 pure transport is exact.
* :func:`solve_goursat_kernel` computes the transmutation kernel ``w`` in

      u(x, t) = f(t - x) + int_x^t w(x, s) f(t - s) ds,

  which solves ``w_ss - w_xx + q(x) w = 0`` on ``0 < x < s`` with
  ``w(0, s) = 0`` and ``w(x, x) = -1/2 int_0^x q``.
  :func:`apply_control_kernel` evaluates the representation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BoundaryControl, Grid, WaveField
from .exceptions import CoverageError, DimensionError, GridError


def _check_coverage(potential, grid, needed_x=None):
    needed = grid.M if needed_x is None else needed_x
    if potential.n != grid.n:
        raise DimensionError(f"potential has n={potential.n}, grid has n={grid.n}")
    if abs(potential.x0) > 1e-12 or not np.isclose(potential.h, grid.h, rtol=1e-12):
        raise CoverageError("potential samples are not aligned with the grid")
    if len(potential.samples) < needed + 1:
        raise CoverageError(
            f"potential covers [0, {potential.X_max}] but [0, {needed * grid.h}] is needed"
        )


def propagate(q_nodes, F, h, keep_history=False):
    """Cross-scheme march for a batch of boundary controls.

    Parameters
    ----------
    q_nodes : (M+1, n, n) array
        Potential at ``x_0 .. x_M``; the node ``x_M`` is held at zero.
    F : (N+1, n, B) array
        ``B`` controls sampled at ``t_0 .. t_N``.

    Returns the field at ``t_N`` with shape ``(M+1, n, B)``, or the whole
    history ``(M+1, N+1, n, B)`` when ``keep_history`` is set.
    """
    M = q_nodes.shape[0] - 1
    Nt = F.shape[0] - 1
    qi = (h * h) * q_nodes[1:-1]
    u_prev = np.zeros((M + 1,) + F.shape[1:], dtype=complex)
    u = np.zeros_like(u_prev)
    u[0] = F[0]
    hist = None
    if keep_history:
        hist = np.zeros((M + 1, Nt + 1) + F.shape[1:], dtype=complex)
        hist[:, 0] = u
    for j in range(Nt):
        nxt = np.empty_like(u)
        nxt[1:-1] = u[2:] + u[:-2] - u_prev[1:-1] - np.einsum("xab,xbk->xak", qi, u[1:-1])
        nxt[0] = F[j + 1]
        nxt[-1] = 0.0
        u_prev, u = u, nxt
        if keep_history:
            hist[:, j + 1] = u
    return hist if keep_history else u


def solve_wave_fd(potential, control, grid):
    """Wave field on ``[0, X_max] x [0, T]`` from the cross scheme."""
    _check_coverage(potential, grid)
    f = control.samples
    if len(f) != grid.N + 1 or f.shape[1] != grid.n:
        raise DimensionError(f"control shape {f.shape} does not match grid (N={grid.N}, n={grid.n})")
    # waves never pass x = T + h; march only as far as needed
    reach = min(grid.M, grid.N + 2)
    hist = propagate(potential.nodes(reach + 1), f[:, :, None], grid.h, keep_history=True)[..., 0]
    values = np.zeros((grid.M + 1, grid.N + 1, grid.n), dtype=complex)
    values[: reach + 1] = hist
    return WaveField(values, grid.h)


@dataclass(frozen=True, eq=False)
class KernelField:
    """Kernel samples ``w(x_i, s_j)`` for ``0 <= i <= j <= N``; zero below."""

    values: np.ndarray  # (N+1, N+1, n, n)
    h: float

    @property
    def omega(self):
        """Max over the triangle of ``||w(x, s)||_2 ** 2``."""
        N1 = self.values.shape[0]
        iu = np.triu_indices(N1)
        tri = self.values[iu]
        if tri.shape[-1] == 1:
            return float(np.max(np.abs(tri[:, 0, 0]) ** 2))
        return float(np.max(np.linalg.norm(tri, ord=2, axis=(1, 2)) ** 2))

    @property
    def N(self):
        return self.values.shape[0] - 1

    def diagonal(self):
        idx = np.arange(self.N + 1)
        return self.values[idx, idx]

    def max_neighbor_jump(self):
        """Largest change between horizontally or vertically adjacent nodes."""
        w = self.values
        N1 = w.shape[0]
        iu = np.triu(np.ones((N1, N1), bool))
        ds = np.abs(w[:, 1:] - w[:, :-1]).max(axis=(2, 3))[iu[:, 1:] & iu[:, :-1]]
        dx = np.abs(w[1:, :] - w[:-1, :]).max(axis=(2, 3))[iu[1:, :] & iu[:-1, :]]
        return float(max(ds.max(initial=0.0), dx.max(initial=0.0)))


def solve_goursat_kernel(potential, grid):
    """Kernel ``w`` on the triangle ``0 <= x <= s <= T``.

    Marching runs on the characteristic lattice ``xi = s - x``,
    ``eta = s + x`` with step ``h`` (so half-steps in ``x``). For each cell
    ``w_xi_eta = -q w / 4`` is integrated with the source at the cell centre,
    ``w`` there taken as the mean of the two already-known corners.
    """
    _check_coverage(potential, grid, needed_x=grid.N)
    N, n, h = grid.N, grid.n, grid.h
    qh = potential.half_grid(N + 1)  # x = r*h/2, r = 0..2N
    # diagonal data -1/2 int_0^x q by trapezoid on the half grid
    cum = np.zeros_like(qh)
    cum[1:] = np.cumsum(0.5 * (qh[1:] + qh[:-1]), axis=0) * (h / 2)
    lattice = np.zeros((N + 1, 2 * N + 1, n, n), dtype=complex)
    lattice[0, :] = -0.5 * cum
    c = h * h / 4.0
    for d in range(2, 2 * N + 1):
        kmax = (d - 1) // 2  # k = d/2 (x = 0) stays zero
        if kmax < 1:
            continue
        k = np.arange(1, kmax + 1)
        m = d - k
        a = lattice[k, m - 1]
        b = lattice[k - 1, m]
        src = np.einsum("kab,kbc->kac", qh[m - k], 0.5 * (a + b))
        lattice[k, m] = a + b - lattice[k - 1, m - 1] - c * src
    i, j = np.triu_indices(N + 1)
    w = np.zeros((N + 1, N + 1, n, n), dtype=complex)
    w[i, j] = lattice[j - i, j + i]
    return KernelField(w, h)


def _time_index(t, grid):
    j = grid.index_of(t)
    if not 0 <= j <= grid.N:
        raise GridError(f"time {t} outside [0, T={grid.T}]")
    return j


def apply_control_kernel(kernel, control, grid, t=None, rule="trapezoid"):
    """``u(., t)`` on ``[0, X_max]`` from the kernel representation.

    ``rule`` selects the quadrature in ``s``: ``"trapezoid"`` or
    ``"midpoint2"`` (composite midpoint with step ``2h``, nodes at odd
    offsets from ``x``; this is the rule the discrete characteristic
    lattice is consistent with).
    """
    J = grid.N if t is None else _time_index(t, grid)
    f = control.samples
    N, n = grid.N, grid.n
    if len(f) != N + 1 or f.shape[1] != n:
        raise DimensionError(f"control shape {f.shape} does not match grid")
    i = np.arange(J + 1)[:, None]
    j = np.arange(N + 1)[None, :]
    inside = (j >= i) & (j <= J)
    if rule == "trapezoid":
        wt = np.where(inside, grid.h, 0.0)
        wt = np.where(inside & ((j == i) | (j == J)), grid.h / 2, wt)
        wt[np.arange(J + 1), np.arange(J + 1)] = np.where(np.arange(J + 1) == J, 0.0, grid.h / 2)
    elif rule == "midpoint2":
        wt = np.where(inside & ((j - i) % 2 == 1), 2 * grid.h, 0.0)
    else:
        raise ValueError(f"unknown quadrature rule {rule!r}")
    back = np.zeros((N + 1, n), dtype=complex)  # back[j] = f(t - s_j)
    back[: J + 1] = f[J::-1]
    u = np.zeros((grid.M + 1, n), dtype=complex)
    u[: J + 1] = back[: J + 1]
    u[: J + 1] += np.einsum("ij,ijab,jb->ia", wt, kernel.values[: J + 1], back)
    return u


def cross_validate_solvers(potential_fn, control_fn, N, T=1.0, n=1, channel_vector=None):
    """Compare FD and kernel waves at ``t = T`` on grids ``N`` and ``2N``.

    ``potential_fn(grid)`` and ``control_fn(t)`` build the inputs per level.
    Returns ``{"l2_error": [e_h, e_h2], "ratio_under_refinement": e_h/e_h2}``.
    """
    errors = []
    for level in (N, 2 * N):
        grid = Grid.from_horizon(level, T, n)
        q = potential_fn(grid)
        f = BoundaryControl.from_function(control_fn, grid, channel_vector)
        if not f.smooth:
            raise DimensionError("cross-validation needs a smooth control (f(0) = f'(0) = 0)")
        u_fd = solve_wave_fd(q, f, grid).final[: level + 1]
        u_k = apply_control_kernel(solve_goursat_kernel(q, grid), f, grid)[: level + 1]
        errors.append(float(np.sqrt(grid.h * np.sum(np.abs(u_fd - u_k) ** 2))))
    ratio = errors[0] / errors[1] if errors[1] > 0 else float("inf")
    return {"l2_error": errors, "ratio_under_refinement": ratio, "N": [N, 2 * N]}


def kernel_volterra_norm_bound(kernel, T):
    """``sqrt(omega) * T``: bound on the Volterra part of ``W Y``."""
    return float(np.sqrt(kernel.omega) * T)


def fd_residual(u, q_nodes, h):
    """Max interior residual of the cross scheme for a sampled field ``u(x, t, n)``."""
    lap = (
        u[2:, 1:-1] + u[:-2, 1:-1] - u[1:-1, 2:] - u[1:-1, :-2]
    ) / h**2  # u_xx - u_tt
    res = -lap + np.einsum("xab,xtb->xta", q_nodes[1 : u.shape[0] - 1], u[1:-1, 1:-1])
    return float(np.max(np.abs(res))) if res.size else 0.0


def kernel_wave_history(kernel, control, grid, rule="trapezoid"):
    """``u(x_i, t_j)`` on ``[0, T] x [0, T]`` from the kernel representation."""
    cols = [apply_control_kernel(kernel, control, grid, j * grid.h, rule)[: grid.N + 1]
            for j in range(grid.N + 1)]
    return np.stack(cols, axis=1)


__all__ = [
    "KernelField",
    "apply_control_kernel",
    "cross_validate_solvers",
    "fd_residual",
    "kernel_wave_history",
    "kernel_volterra_norm_bound",
    "propagate",
    "solve_goursat_kernel",
    "solve_wave_fd",
]
