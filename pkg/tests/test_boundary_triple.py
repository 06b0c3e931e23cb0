import dataclasses

import numpy as np
import pytest

from waveband.boundary_triple import (
    EndpointFunction,
    boundary_coefficient,
    compute_defect_frame,
    frame_residuals,
    frame_X_max,
    gamma1,
    gamma2,
    green_residual,
    vishik_decompose,
)
from waveband.core import HermitianPotential
from waveband.exceptions import DefectFrameError, DegeneracyError, TruncationError
from waveband.potentials import potential_function


def _potential(spec, N=128, X=20.0):
    h = 1.0 / N
    x = np.arange(int(round(X * N)) + 1) * h
    fn, n = potential_function(spec, 1)
    return HermitianPotential(fn(x), h, spec), x, h


def _fn(f, df, x, h):
    return EndpointFunction.from_function(lambda s: np.asarray(f(s))[:, None], lambda s: np.asarray(df(s))[:, None], x, h)


@pytest.fixture(scope="module")
def unit():
    q, x, h = _potential("const:1")
    return q, compute_defect_frame(q), x, h


def test_frame_for_unit_potential(unit):
    q, fr, x, h = unit
    assert np.abs(fr.K[:, 0, 0] - np.exp(-x)).max() <= 1e-6
    assert np.abs(fr.K1[:, 0, 0] - 0.5 * x * np.exp(-x)).max() <= 1e-6
    assert abs(fr.Kp0[0, 0] + 1) <= 1e-6
    assert abs(fr.K1p0[0, 0] - 0.5) <= 1e-6
    assert abs(fr.G_K[0, 0] - 0.5) <= 1e-8
    rK, rK1 = frame_residuals(fr, q)
    assert rK <= 1e-4 and rK1 <= 1e-8


def test_frame_for_diagonal_potential():
    q, x, h = _potential("diag:1,4")
    fr = compute_defect_frame(q)
    assert np.allclose(fr.K[:, 1, 1], np.exp(-2 * x), atol=1e-6)
    assert np.allclose(fr.K[:, 0, 1], 0, atol=1e-12)
    assert np.allclose(fr.Kp0, np.diag([-1, -2]), atol=1e-6)
    assert np.allclose(fr.K1p0, np.diag([0.5, 0.25]), atol=1e-6)
    assert np.allclose(fr.G_K, np.diag([0.5, 0.25]), atol=1e-8)


def test_gamma_maps(unit):
    _, fr, x, h = unit
    y = _fn(lambda s: 3 * np.exp(-s), lambda s: -3 * np.exp(-s), x, h)
    g1, d = gamma1(y, fr)
    assert np.allclose(d, [3]) and np.abs(g1[:, 0] + 3 * np.exp(-x)).max() <= 1e-6
    g2, c = gamma2(y, fr)
    assert abs(c[0]) <= 1e-6 and np.abs(g2).max() <= 1e-6
    # y = sin(x) e^{-x}: y(0) = 0, y'(0) = 1, so c = 1 / K1'(0) = 2
    y = _fn(lambda s: np.sin(s) * np.exp(-s), lambda s: (np.cos(s) - np.sin(s)) * np.exp(-s), x, h)
    assert abs(boundary_coefficient(y, fr)[0] - 2) <= 1e-5
    assert np.abs(gamma1(y, fr)[0]).max() == 0


def test_green_residual_examples(unit):
    q, fr, x, h = unit
    u = _fn(lambda s: s * np.exp(-s), lambda s: (1 - s) * np.exp(-s), x, h)
    v = _fn(lambda s: np.exp(-2 * s), lambda s: -2 * np.exp(-2 * s), x, h)
    assert green_residual(u, u, q, fr) <= 1e-10
    assert green_residual(u, v, q, fr) <= 5e-5
    # vanishing boundary data: both sides are ~0
    w = _fn(lambda s: s**2 * np.exp(-2 * s), lambda s: (2 * s - 2 * s**2) * np.exp(-2 * s), x, h)
    assert green_residual(w, v, q, fr) <= 5e-5


def test_green_residual_needs_decay(unit):
    q, fr, x, h = unit
    flat = EndpointFunction(np.ones_like(x), h)
    with pytest.raises(TruncationError):
        green_residual(flat, flat, q, fr)


def test_vishik_pieces(unit):
    _, fr, x, h = unit
    y0, g, hp, c, d = vishik_decompose(EndpointFunction(2 * fr.K[:, :, 0], h), fr)
    assert np.allclose(d, [2]) and abs(c[0]) <= 1e-10 and np.abs(y0).max() <= 1e-10
    y0, g, hp, c, d = vishik_decompose(EndpointFunction(fr.K1[:, :, 0], h), fr)
    assert abs(c[0] - 1) <= 1e-10 and abs(d[0]) <= 1e-12 and np.abs(y0).max() <= 1e-10
    y = EndpointFunction(np.sin(x) * np.exp(-x), h)
    y0, g, hp, c, d = vishik_decompose(y, fr)
    assert abs(c[0] - 2) <= 1e-4 and abs(d[0]) == 0
    assert np.abs(y0[:, 0] - np.exp(-x) * (np.sin(x) - x)).max() <= 1e-5
    assert np.abs(y0[0]).max() <= 1e-12
    assert np.abs((-25 * y0[0] + 48 * y0[1] - 36 * y0[2] + 16 * y0[3] - 3 * y0[4]) / (12 * h)).max() <= 1e-8


def test_zero_potential_has_no_decaying_frame():
    q, _, _ = _potential("zero")
    with pytest.raises(DefectFrameError):
        compute_defect_frame(q)
    with pytest.raises(DefectFrameError):
        frame_X_max(1.0, 0.0)


def test_short_span_is_rejected():
    q, _, _ = _potential("const:1", X=3.0)
    with pytest.raises(DefectFrameError):
        compute_defect_frame(q)


def test_degenerate_frame(unit):
    _, fr, x, h = unit
    bad = dataclasses.replace(fr, K1p0=np.zeros((1, 1)), K1p0_condition=np.inf)
    y = EndpointFunction(np.exp(-x), h)
    with pytest.raises(DegeneracyError):
        gamma2(y, bad)
    with pytest.raises(DegeneracyError):
        vishik_decompose(y, bad)
