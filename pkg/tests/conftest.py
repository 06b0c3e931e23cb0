import functools

import numpy as np
import pytest

from waveband.core import DiscreteOperator, Grid, spectral_norm
from waveband.pipeline import run_from_connecting, run_pipeline

SCALAR_BUMP = "bump:0.5,0.4,0.02"
MATRIX_BUMP = "hbump:1,0.5,0.02"
TEST_POTENTIALS = ("zero", "const:1", SCALAR_BUMP, MATRIX_BUMP)

_ACCEPTANCE_LINES = []


def record_acceptance(number, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}"
    _ACCEPTANCE_LINES.append(line)
    print(line)


@functools.lru_cache(maxsize=None)
def pipeline(spec, N, T=1.0, route="cholesky", method="kernel"):
    return run_pipeline(spec, N, T, route=route, method=method)


@functools.lru_cache(maxsize=None)
def corrupted_pipeline(N, seed=7, level=0.1):
    """Pipeline on ``C + E`` with ``E`` symmetric noise of norm ``level * ||C||``."""
    b = pipeline("const:1", N)
    C = b.C.matrix
    G = np.random.default_rng(seed).standard_normal(C.shape)
    E = G + G.T
    E *= level * spectral_norm(C) / spectral_norm(E)
    Cc = DiscreteOperator(C + E, b.grid.h, b.grid.n, "C")
    return run_from_connecting(Cc, b.grid, reject=False)


def grid(N=64, T=1.0, n=1, X_max=None):
    return Grid.from_horizon(N, T, n, X_max)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
