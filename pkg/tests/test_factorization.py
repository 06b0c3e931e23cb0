import numpy as np
import pytest

from conftest import MATRIX_BUMP, grid, pipeline
from waveband.core import DiscreteOperator, block_diagonal, flip, spectral_norm
from waveband.exceptions import FactorizationError, GridError, NotPSDError
from waveband.factorization import (
    compare_factors,
    factor_residual,
    factorize_cholesky_nest,
    factorize_formula,
    factorize_formula_at,
    formula_ingredients,
    model_control_operator,
    nest_leakage,
    operator_sqrt,
    orthogonalizer,
    orthogonalizer_consistency,
)
from waveband.forward import solve_goursat_kernel
from waveband.pipeline import orthogonalizer_of


def _op(M, n=1, role="C", h=1 / 16):
    return DiscreteOperator(M, h, n, role)


def test_sqrt_examples():
    assert np.allclose(operator_sqrt(_op(np.eye(16))).matrix, np.eye(16))
    R = operator_sqrt(_op(np.kron(np.eye(8), np.diag([4.0, 9.0])), n=2)).matrix
    assert np.allclose(R, np.kron(np.eye(8), np.diag([2.0, 3.0])))


def test_sqrt_of_pipeline_connecting():
    C = pipeline("const:1", 64).C
    R = operator_sqrt(C).matrix
    assert spectral_norm(R @ R - C.matrix) / spectral_norm(C.matrix) <= 1e-10


def test_sqrt_rejects_indefinite():
    with pytest.raises(NotPSDError):
        operator_sqrt(_op(np.diag([1.0, -1.0] * 8)))


def test_cholesky_examples():
    assert np.allclose(factorize_cholesky_nest(_op(np.eye(16))).matrix, np.eye(16))
    d = np.linspace(1, 4, 16)
    assert np.allclose(factorize_cholesky_nest(_op(np.diag(d))).matrix, np.diag(np.sqrt(d)))


def test_cholesky_breakdown():
    with pytest.raises(FactorizationError):
        factorize_cholesky_nest(_op(np.diag([1.0] * 15 + [-1.0])))


@pytest.mark.parametrize("spec", ["const:1", MATRIX_BUMP])
def test_cholesky_exact_nest_and_residual(spec):
    b = pipeline(spec, 64)
    V = factorize_cholesky_nest(b.C)
    assert factor_residual(V, b.C) <= 1e-12
    assert nest_leakage(V, b.grid) == 0.0
    blocks = V.matrix.reshape(64, b.grid.n, 64, b.grid.n)[np.arange(64), :, np.arange(64), :]
    for B in blocks:  # gauge: Hermitian positive definite diagonal blocks
        assert np.allclose(B, B.conj().T, atol=1e-12) and np.linalg.eigvalsh(B)[0] > 0


def test_formula_identity_and_zero_potential():
    g = grid(16)
    V, _ = factorize_formula(_op(np.eye(16)), g)
    assert np.allclose(V.matrix, np.eye(16), atol=1e-12)
    b = pipeline("zero", 32)
    V, rep = factorize_formula(b.C, b.grid)
    assert np.allclose(V.matrix, np.eye(32), atol=1e-10)
    assert np.allclose(model_control_operator(V, b.grid).matrix, np.eye(32), atol=1e-10)


def test_formula_route_residual_and_leakage():
    b = pipeline("const:1", 128)
    V, rep = factorize_formula(b.C, b.grid)
    assert rep["residual"] <= 1e-8 and rep["converged"]
    cache = formula_ingredients(b.C, b.grid)
    leak = [nest_leakage(factorize_formula_at(b.C, b.grid, p, _cache=cache), b.grid) for p in (8, 16, 32)]
    assert leak[2] < leak[1] < leak[0]


def test_formula_finest_level_equals_cholesky():
    b = pipeline(MATRIX_BUMP, 64)
    Vf, _ = factorize_formula(b.C, b.grid)
    assert np.abs(Vf.matrix - factorize_cholesky_nest(b.C).matrix).max() <= 1e-10


def test_compare_identical_factors():
    V = factorize_cholesky_nest(pipeline("const:1", 32).C)
    rep = compare_factors(V, V)
    assert np.allclose(rep["U"], np.eye(32)) and rep["offblock_mass"] < 1e-25


def test_compare_phase_gauge():
    b = pipeline(MATRIX_BUMP, 32)
    V1 = factorize_cholesky_nest(b.C)
    phases = np.exp(1j * np.linspace(0, 3, 64)).reshape(32, 2)
    Theta = block_diagonal(np.stack([np.diag(p) for p in phases]))
    V2 = DiscreteOperator(Theta @ V1.matrix, b.grid.h, 2, "V")
    rep = compare_factors(V1, V2)
    assert np.allclose(rep["U"], Theta, atol=1e-10) and rep["is_unitary"] and rep["offblock_mass"] < 1e-20


def test_gauge_offblock_mass_shrinks():
    b = pipeline("const:1", 128)
    Vc = factorize_cholesky_nest(b.C)
    cache = formula_ingredients(b.C, b.grid)
    mass = [compare_factors(factorize_formula_at(b.C, b.grid, p, _cache=cache), Vc)["offblock_mass"]
            for p in (8, 16, 32)]
    assert mass[1] <= 0.6 * mass[0] and mass[2] <= 0.6 * mass[1]


def test_model_control_operator_properties():
    b = pipeline("const:1", 128)
    g = b.grid
    J = flip(g.N, g.n)
    Wt = b.Wt.matrix
    assert np.abs(Wt.conj().T @ Wt - J @ b.C.matrix @ J).max() <= 1e-8
    k = solve_goursat_kernel(b.potential, g)
    assert spectral_norm(Wt - np.eye(g.dim)) <= np.sqrt(k.omega) * g.T + g.h


def test_model_operators_from_two_routes_differ_by_gauge():
    b = pipeline("const:1", 64)
    g = b.grid
    J = flip(g.N, g.n)
    Vc = factorize_cholesky_nest(b.C)
    Vf = factorize_formula_at(b.C, g, 8)
    U = compare_factors(Vf, Vc)["U"]
    lhs = model_control_operator(Vc, g).matrix
    rhs = J @ U @ J @ model_control_operator(Vf, g).matrix
    assert np.abs(lhs - rhs).max() <= 1e-10


def test_isometry_transfer():
    b = pipeline(MATRIX_BUMP, 64)
    g = b.grid
    J = flip(g.N, g.n)
    R = operator_sqrt(b.C).matrix
    f = np.random.default_rng(3).standard_normal(g.dim)
    assert abs(np.linalg.norm(b.Wt.matrix @ f) - np.linalg.norm(R @ J @ f)) <= 1e-8


def test_orthogonalizer_is_unitary_and_consistent():
    for spec in ("zero", "const:1", MATRIX_BUMP):
        long, short = pipeline(spec, 64), pipeline(spec, 32, 0.5)
        Phi = orthogonalizer_of(long).matrix
        assert spectral_norm(Phi.conj().T @ Phi - np.eye(long.grid.dim)) <= 1e-10
        rep = orthogonalizer_consistency(orthogonalizer_of(short), short.grid, orthogonalizer_of(long), long.grid)
        assert rep["total"] <= long.grid.h


def test_orthogonalizer_consistency_grid_mismatch():
    a, b = pipeline("const:1", 32), pipeline("const:1", 64)
    with pytest.raises(GridError):
        orthogonalizer_consistency(orthogonalizer_of(a), a.grid, orthogonalizer_of(b), b.grid)
