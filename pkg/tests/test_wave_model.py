import numpy as np
import pytest

from conftest import MATRIX_BUMP, SCALAR_BUMP, corrupted_pipeline, grid, pipeline
from waveband.boundary_triple import compute_defect_frame
from waveband.core import HermitianPotential, diagonal_blocks
from waveband.exceptions import ConfigurationError, DefectFrameError, ModelError, RecoveryRejected
from waveband.potentials import potential_function
from waveband.wave_model import (
    assemble_model_operator,
    conjugation_check,
    decomposability_diagnostic,
    default_margin,
    interior_norm,
    interior_slots,
    locality_residuals,
    recover_potential,
    recovery_error,
    verify_conditions,
)


def _interior_blocks(b):
    g = b.grid
    return diagonal_blocks(b.Q.meta["raw"], g.n)[interior_slots(g, default_margin(g))]


def test_model_operator_of_free_medium_is_minus_second_derivative():
    b = pipeline("zero", 64)
    tau = np.arange(64) / 64
    Ly = (b.L.matrix @ ((tau * (1 - tau)) ** 2)).real
    exact = -(2 - 12 * tau + 12 * tau**2)
    assert np.abs(Ly[1:-2] - exact[1:-2]).max() <= 1e-3


def test_model_operator_rejects_singular_input():
    g = grid(16)
    with pytest.raises(ModelError):
        assemble_model_operator(np.zeros((16, 16)), g)


@pytest.mark.parametrize("spec,value", [("zero", 0.0), ("const:1", 1.0)])
def test_Q_diagonal_blocks_reproduce_constant_potentials(spec, value):
    B = _interior_blocks(pipeline(spec, 128))
    assert np.abs(B - value).max() <= 5e-3


def test_Q_diagonal_blocks_for_two_channels_converge():
    errs = [recovery_error(pipeline("diag:1,4", N).q_hat, pipeline("diag:1,4", N).potential) for N in (64, 128)]
    assert errs[1] <= 0.6 * errs[0] and errs[1] <= 1e-2
    B = _interior_blocks(pipeline("diag:1,4", 128))
    assert np.abs(B[:, 0, 1]).max() <= 1e-12


def test_interior_norm_is_stable():
    for spec in ("const:1", MATRIX_BUMP):
        a, c = interior_norm(pipeline(spec, 64).Q, pipeline(spec, 64).grid), \
            interior_norm(pipeline(spec, 128).Q, pipeline(spec, 128).grid)
        assert abs(c / a - 1) <= 0.1


def test_decomposability_examples():
    assert decomposability_diagnostic(pipeline("zero", 64).Q, pipeline("zero", 64).grid)["offdiag_mass"] == 0.0
    m = [pipeline("const:1", N).report["decomposability"]["offdiag_mass"] for N in (64, 128)]
    assert m[1] <= 0.6 * m[0] and m[1] <= 0.05
    d = corrupted_pipeline(64).report["decomposability"]
    assert d["offdiag_mass"] > 0.5


def test_decomposability_margin_floor():
    b = pipeline("const:1", 64)
    with pytest.raises(ConfigurationError):
        decomposability_diagnostic(b.Q, b.grid, margin=b.grid.h)


@pytest.mark.parametrize("spec", ["const:1", SCALAR_BUMP, MATRIX_BUMP])
def test_recovery_is_hermitian_and_accurate(spec):
    b = pipeline(spec, 128)
    q = b.q_hat
    assert np.allclose(q.samples, np.conj(np.swapaxes(q.samples, 1, 2)))
    assert q.x0 >= default_margin(b.grid) - 1e-12
    assert recovery_error(q, b.potential) <= 1e-2


def test_recovery_rejects_non_decomposable_input():
    b = corrupted_pipeline(64)
    with pytest.raises(RecoveryRejected) as exc:
        recover_potential(b.Q, b.grid)
    assert exc.value.report["offdiag_mass"] > 0.5


def test_locality_residuals_shrink():
    r = [locality_residuals(pipeline(SCALAR_BUMP, N).L, pipeline(SCALAR_BUMP, N).grid) for N in (64, 128)]
    assert r[1][0] <= 0.75 * r[0][0] and r[1][1] <= 0.75 * r[0][1]


def _long_potential(spec, X=20.0, N=64):
    h = 1 / N
    x = np.arange(int(X * N) + 1) * h
    fn, _ = potential_function(spec, 1)
    return HermitianPotential(fn(x), h, spec)


def test_conjugation_scalar_and_commuting():
    fr = compute_defect_frame(_long_potential("const:1"))
    rep = conjugation_check(pipeline(SCALAR_BUMP, 64).q_hat, fr)
    assert rep["kappa"] == 1.0 and rep["conjugation_gap"] <= 1e-14 and rep["bound_holds"]
    fr = compute_defect_frame(_long_potential("diag:1,4"))
    rep = conjugation_check(pipeline("diag:1,4", 64).q_hat, fr)
    assert abs(rep["kappa"] - np.sqrt(2)) <= 1e-6
    assert rep["commuting"] and rep["identity_when_commuting"]


def test_conjugation_bound_for_matrix_bump():
    fr = compute_defect_frame(_long_potential(MATRIX_BUMP))
    rep = conjugation_check(pipeline(MATRIX_BUMP, 64).q_hat, fr)
    assert rep["bound_holds"] and rep["max_ratio"] <= rep["kappa"]


def test_conjugation_needs_frame():
    with pytest.raises(DefectFrameError):
        conjugation_check(pipeline("const:1", 32).q_hat, None)


@pytest.mark.parametrize("spec", ["zero", "const:1"])
def test_conditions_hold_for_regular_potentials(spec):
    rep = verify_conditions([pipeline(spec, N) for N in (64, 128)])
    assert rep["all_pass"] and rep["decomposability"]["pass"]
    assert rep["C5"]["surrogate"]


def test_conditions_fail_for_corrupted_data():
    rep = verify_conditions([corrupted_pipeline(N) for N in (64, 128)])
    assert not rep["C1"]["pass"] and not rep["decomposability"]["pass"] and not rep["all_pass"]


def test_conditions_need_two_levels():
    with pytest.raises(ConfigurationError):
        verify_conditions([pipeline("const:1", 64)])
