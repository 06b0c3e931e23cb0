import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from conftest import SCALAR_BUMP
from waveband.estimators import PotentialRecovery, WaveSimulator
from waveband.exceptions import DimensionError, HermitianError


@pytest.fixture(scope="module")
def fitted():
    sim = WaveSimulator(SCALAR_BUMP, N=64).fit()
    rec = PotentialRecovery().fit(sim.connecting_operator())
    return sim, rec


def test_params_and_clone():
    est = PotentialRecovery(n=2, route="formula")
    assert est.get_params() == {"n": 2, "T": 1.0, "route": "formula", "margin": None, "reject": True}
    c = clone(est)
    assert c.get_params() == est.get_params() and c is not est
    assert clone(WaveSimulator(N=32)).get_params()["N"] == 32


def test_not_fitted():
    with pytest.raises(NotFittedError):
        WaveSimulator().transform(np.zeros((1, 64)))
    with pytest.raises(NotFittedError):
        PotentialRecovery().predict([0.5])


def test_simulator_transform_matches_connecting_operator(fitted):
    sim, _ = fitted
    F = np.random.default_rng(0).standard_normal((3, 64))
    U = sim.transform(F)
    C = sim.connecting_operator()
    assert U.shape == (3, 64)
    assert np.allclose(np.einsum("ki,ki->k", U.conj(), U).real, np.einsum("ki,ij,kj->k", F, C, F).real)


def test_recovery_predict_and_score(fitted):
    sim, rec = fitted
    assert rec.error_against(sim.potential_) <= 5e-3
    q = rec.predict([0.5])
    assert q.shape == (1, 1, 1) and abs(q[0, 0, 0] - sim.potential_.at(0.5)[0, 0]) <= 0.02
    assert -0.05 <= rec.score(None) <= 0


def test_recovery_transform_is_isometric_on_gram(fitted):
    sim, rec = fitted
    f = np.random.default_rng(1).standard_normal((1, 64))
    J = np.eye(64)[::-1]
    lhs = np.linalg.norm(rec.transform(f))
    rhs = np.sqrt((f @ J @ sim.connecting_operator() @ J @ f.T).real[0, 0])
    assert abs(lhs - rhs) <= 1e-8 * rhs


def test_input_validation():
    with pytest.raises(HermitianError):
        PotentialRecovery().fit(np.triu(np.ones((16, 16))))
    with pytest.raises(DimensionError):
        PotentialRecovery(n=2).fit(np.eye(15))
    sim = WaveSimulator("const:1", N=16).fit()
    with pytest.raises(DimensionError):
        sim.transform(np.zeros((2, 17)))
