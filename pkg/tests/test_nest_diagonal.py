import numpy as np
import pytest

from conftest import grid, pipeline
from waveband.core import control_cutoff_family, flip, spectral_norm, state_cutoff_family
from waveband.exceptions import DimensionError, GridError, PolarError
from waveband.forward import solve_goursat_kernel
from waveband.nest_diagonal import (
    control_cutoff,
    diagonal_limit,
    diagonal_sum,
    intertwining_defect,
    make_partition,
    polar_unitary,
    reflection_operator,
)
from waveband.operators import assemble_control_operator, reachable_family
from waveband.potentials import make_potential


def test_make_partition_examples():
    g = grid(8)
    p = make_partition(g, 4)
    assert np.allclose(p.knots, [0, 0.25, 0.5, 0.75, 1]) and p.delta == 0.25
    assert make_partition(g, 8).delta == g.h
    with pytest.raises(GridError):
        make_partition(g, 3)


def test_control_cutoff_examples():
    g = grid(16)
    assert np.array_equal(control_cutoff(g.T, g).matrix, np.eye(16))
    assert np.all(control_cutoff(0.0, g).matrix == 0)
    X = control_cutoff(0.5, g).matrix
    t = (np.arange(16) + 1) * g.h
    assert np.array_equal((X @ np.ones(16)).real, (t > 0.5).astype(float))
    Xa, Xb = control_cutoff(0.25, g).matrix, control_cutoff(0.75, g).matrix
    assert np.array_equal(Xa @ Xb, Xa) and np.array_equal(Xb @ Xa, Xa)
    with pytest.raises(GridError):
        control_cutoff(0.3, g)


def test_diagonal_of_reflection_is_reflection():
    g = grid(32)
    W = assemble_control_operator(make_potential("zero", g), g)
    P, X = state_cutoff_family(g), control_cutoff_family(g)
    for parts in (1, 4, 32):
        assert np.array_equal(diagonal_sum(W, make_partition(g, parts), P, X).matrix, flip(32, 1))


def test_diagonal_estimate_sixteenth():
    b = pipeline("const:1", 256)
    g = b.grid
    k = solve_goursat_kernel(b.potential, g)
    f = np.sin(np.pi * (np.arange(g.N) + 1) * g.h)
    errs = []
    for parts in (16, 32):
        D = diagonal_sum(b.W, make_partition(g, parts), state_cutoff_family(g), control_cutoff_family(g))
        errs.append(g.h * np.sum(np.abs(D.matrix @ f - f[::-1]) ** 2))
    delta = 1 / 16
    assert errs[0] <= delta**2 * k.omega * g.h * np.sum(f**2)
    assert errs[1] <= 0.5 * errs[0]


def test_adjoint_relation_exact():
    b = pipeline("const:1", 64)
    g = b.grid
    part = make_partition(g, 8)
    P, X = state_cutoff_family(g), control_cutoff_family(g)
    D = diagonal_sum(b.W, part, P, X).matrix
    Dstar = diagonal_sum(b.W.matrix.conj().T, part, X, P).matrix
    assert np.allclose(Dstar, D.conj().T, atol=1e-14)


def test_intertwining_at_knots():
    b = pipeline("const:1", 64)
    g = b.grid
    part = make_partition(g, 8)
    P, X = state_cutoff_family(g), control_cutoff_family(g)
    D = diagonal_sum(b.W, part, P, X)
    assert intertwining_defect(D, part, P, X) <= spectral_norm(b.W.matrix)


def test_family_mismatch():
    g = grid(16)
    with pytest.raises(DimensionError):
        diagonal_sum(np.eye(16), make_partition(g, 4), [np.eye(16)] * 3, [np.eye(16)] * 5)


def test_diagonal_limit_zero_exact():
    b = pipeline("zero", 64)
    D, rep = diagonal_limit(b.W, b.grid, reference=flip(64, 1))
    assert rep["converged"] and all(lv["dist_reference"] == 0 for lv in rep["levels"])


def test_diagonal_limit_unit_potential_certificate():
    b = pipeline("const:1", 256)
    k = solve_goursat_kernel(b.potential, b.grid)
    D, rep = diagonal_limit(b.W, b.grid, reference=flip(256, 1), omega=k.omega)
    assert rep["converged"]
    assert spectral_norm(D.matrix - flip(256, 1)) <= np.sqrt(k.omega) * b.grid.h
    for lv in rep["levels"]:
        assert lv["dist_reference"] <= lv["bound"]
    smin = [lv["sigma_min"] for lv in rep["levels"]]
    assert min(smin) > 0.9


def test_nested_partition_difference_bound():
    b = pipeline("const:1", 128)
    g = b.grid
    k = solve_goursat_kernel(b.potential, g)
    P, X = state_cutoff_family(g), control_cutoff_family(g)
    D8 = diagonal_sum(b.W, make_partition(g, 8), P, X).matrix
    D16 = diagonal_sum(b.W, make_partition(g, 16), P, X).matrix
    assert spectral_norm(D8 - D16) <= np.sqrt(k.omega) / 8


def _haar_weighted(N, growth=4.0):
    """Mass concentrated ever closer to the diagonal: partition sums diverge."""
    j = N - 1 - np.arange(N)  # control coordinate order (nest at the end)
    A = np.zeros((N, N))
    for a in range(N):
        for b in range(N):
            x = int(a ^ j[b])
            if x:
                level = int(np.log2(N)) - x.bit_length()  # finer Haar level -> larger
                A[a, b] = growth**level / N
    return A


def test_diagonal_limit_divergence_flag():
    g = grid(64)
    D, rep = diagonal_limit(_haar_weighted(64), g)
    assert D is None and not rep["converged"]


def test_cutoff_and_reachable_families_agree():
    b = pipeline("const:1", 64)
    g = b.grid
    part = make_partition(g, 16)
    X = control_cutoff_family(g)
    D1 = diagonal_sum(b.W, part, state_cutoff_family(g), X).matrix
    D2 = diagonal_sum(b.W, part, reachable_family(b.W, g), X).matrix
    assert spectral_norm(D1 - D2) <= g.h


def test_polar_examples():
    g = grid(16)
    R = reflection_operator(g)
    Phi, absD = polar_unitary(R)
    assert np.allclose(Phi.matrix, R.matrix.conj().T) and np.allclose(absD.matrix, np.eye(16))
    Phi, absD = polar_unitary(2 * np.eye(4))
    assert np.allclose(Phi.matrix, np.eye(4)) and np.allclose(absD.matrix, 2 * np.eye(4))
    with pytest.raises(PolarError):
        polar_unitary(np.diag([1.0, 0.0]))


def test_polar_of_pipeline_diagonal():
    b = pipeline("const:1", 64)
    D, _ = diagonal_limit(b.W, b.grid, schedule=[8])
    Phi, absD = polar_unitary(D)
    P = Phi.matrix
    assert spectral_norm(P.conj().T @ P - np.eye(64)) <= 1e-10
    assert np.abs(P @ absD.matrix - D.matrix.conj().T).max() <= 1e-10


def test_polar_factor_settles_under_refinement():
    b = pipeline("const:1", 128)
    phis = {p: polar_unitary(diagonal_limit(b.W, b.grid, schedule=[p])[0])[0].matrix for p in (16, 32, 64, 128)}
    gaps = [spectral_norm(phis[p] - phis[128]) for p in (16, 32, 64)]
    assert gaps[2] < gaps[1] < gaps[0] < 0.1
