"""End-to-end runs: potential -> W -> C -> V -> W~ -> L~ -> Q -> q^."""
from dataclasses import dataclass, field

import numpy as np

from .core import DiscreteOperator, Grid
from .exceptions import ConfigurationError
from .factorization import (
    factorize_cholesky_nest,
    factorize_formula,
    model_control_operator,
    orthogonalizer,
)
from .operators import assemble_control_operator, compute_connecting
from .potentials import make_potential
from .wave_model import assemble_model_operator, assemble_Q, decomposability_diagnostic, recover_potential

ROUTES = ("cholesky", "formula")


@dataclass(eq=False)
class Bundle:
    """Every intermediate of one run at one grid."""

    grid: Grid
    potential: object
    C: DiscreteOperator
    W: DiscreteOperator = None
    V: DiscreteOperator = None
    Wt: DiscreteOperator = None
    L: DiscreteOperator = None
    mask: np.ndarray = None
    Q: DiscreteOperator = None
    q_hat: object = None
    report: dict = field(default_factory=dict)


def simulate_connecting(potential, grid, method="kernel"):
    W = assemble_control_operator(potential, grid, method)
    return W, compute_connecting(W)


def run_from_connecting(C, grid, route="cholesky", margin=None, schedule=None, W=None,
                        potential=None, reject=True):
    """Factor ``C`` and carry the model construction through recovery."""
    if route not in ROUTES:
        raise ConfigurationError(f"route must be one of {ROUTES}, got {route!r}")
    if C.N != grid.N or C.n != grid.n:
        raise ConfigurationError(f"C has N={C.N}, n={C.n}; grid has N={grid.N}, n={grid.n}")
    b = Bundle(grid=grid, potential=potential, C=C, W=W)
    if route == "cholesky":
        b.V = factorize_cholesky_nest(C)
    else:
        b.V, b.report["formula"] = factorize_formula(C, grid, schedule)
    b.Wt = model_control_operator(b.V, grid)
    b.L, b.mask = assemble_model_operator(b.Wt, grid)
    b.Q = assemble_Q(b.L, grid, b.mask)
    diag = decomposability_diagnostic(b.Q, grid, margin)
    b.report["decomposability"] = diag
    if reject or diag["offdiag_mass"] <= 0.5:
        b.q_hat, _ = recover_potential(b.Q, grid, margin, diag)
    return b


def run_pipeline(potential_spec, N, T=1.0, n=None, route="cholesky", method="kernel",
                 margin=None, schedule=None, X_max=None, reject=True):
    """Simulate ``C`` for a potential and run the inverse chain on it."""
    from .potentials import channel_count

    n = channel_count(potential_spec) if n is None else n
    grid = Grid.from_horizon(N, T, n, X_max)
    q = potential_spec if not isinstance(potential_spec, str) else make_potential(potential_spec, grid)
    W, C = simulate_connecting(q, grid, method)
    b = run_from_connecting(C, grid, route, margin, schedule, W=W, potential=q, reject=reject)
    b.report["method"] = method
    b.report["route"] = route
    return b


def orthogonalizer_of(b):
    if b.W is None:
        raise ConfigurationError("orthogonalizer needs W (simulated data)")
    return orthogonalizer(b.Wt, b.W, b.grid)


def diagonal_estimate(W, grid, kernel, control, parts_list):
    """Measured ``||D f - f(T - .)||^2`` against ``delta^2 omega ||f||^2`` per partition."""
    from .core import control_cutoff_family, flip, state_cutoff_family
    from .nest_diagonal import diagonal_sum, make_partition

    f = np.asarray(control).ravel()
    Rf = flip(grid.N, grid.n) @ f
    norm2 = grid.h * np.vdot(f, f).real
    P, X = state_cutoff_family(grid), control_cutoff_family(grid)
    rows = []
    for parts in parts_list:
        part = make_partition(grid, parts)
        D = diagonal_sum(W, part, P, X)
        err2 = grid.h * np.sum(np.abs(D.matrix @ f - Rf) ** 2)
        bound = part.delta**2 * kernel.omega * norm2
        rows.append({"parts": parts, "delta": part.delta, "error_sq": float(err2), "bound": float(bound),
                     "holds": bool(err2 <= bound)})
    return rows


def eikonal_deviation(W, grid, parts, Phi=None, tol=1e-8):
    """``||Phi E Phi* - (T - t)||`` with ``E`` built from the reachable nest of ``W``.

    ``Phi`` defaults to the polar factor of the diagonal of ``W`` at ``delta = h``.
    """
    from .core import spectral_norm
    from .nest_diagonal import diagonal_sum, make_partition, polar_unitary
    from .operators import assemble_eikonal, reachable_family
    from .core import control_cutoff_family

    fam = reachable_family(W, grid, tol)
    if Phi is None:
        D = diagonal_sum(W, make_partition(grid, grid.N), fam, control_cutoff_family(grid))
        Phi, _ = polar_unitary(D)
    E = assemble_eikonal(fam, make_partition(grid, parts), grid.h, grid.n)
    t = np.repeat((np.arange(grid.N) + 1) * grid.h, grid.n)
    target = np.diag(grid.T - t)
    M = Phi.matrix @ E.matrix @ Phi.matrix.conj().T
    return {"parts": parts, "delta": grid.T / parts, "deviation": spectral_norm(M - target)}
