import numpy as np
import pytest

from isoembed.darboux import ScaledState, initial_coefficient, scaled_residual
from isoembed.errors import SingularityError
from isoembed.grid import Grid
from isoembed.linearize import (ReducedOperator, apply_L, discrete_jacobian, gateaux_coefficients, phi_over_t,
                                reduce)
from isoembed.metric import kg_family
from isoembed.metric import test_family as tf_metric


def _state(m, eps=0.05, g=None, amp=0.01):
    g = g or Grid(32, 33)
    X, T = g.mesh
    return ScaledState.zero(eps, g, m).with_v(amp * np.sin(X) * np.cos(T))


def _probe(g):
    X, T = g.mesh
    return np.cos(X) * np.exp(T / 3) + 0.3 * np.sin(2 * X) * T


@pytest.mark.parametrize("metric", [tf_metric(1, 4.0), kg_family(1, 4.0, c=0.2)], ids=["TF", "kg-variant"])
def test_discrete_jacobian_matches_difference_quotient(metric):
    s = _state(metric)
    ac = initial_coefficient(metric)
    w = _probe(s.grid)
    J = discrete_jacobian(s, ac, metric)
    h = 1e-6
    fd = (scaled_residual(s.with_v(s.v + h * w), ac, metric).values.values
          - scaled_residual(s.with_v(s.v - h * w), ac, metric).values.values) / (2 * h)
    jw = (J @ w.ravel()).reshape(s.grid.shape)
    np.testing.assert_allclose(jw, fd, atol=1e-8 * np.max(np.abs(fd)))


def test_gateaux_apply_equals_jacobian(tf14):
    s = _state(tf14)
    ac = initial_coefficient(tf14)
    w = _probe(s.grid)
    raw = gateaux_coefficients(s, ac, tf14)
    jw = (discrete_jacobian(s, ac, tf14) @ w.ravel()).reshape(s.grid.shape)
    np.testing.assert_allclose(raw.apply(s, w), jw, atol=1e-10 * np.max(np.abs(jw)))


def test_leading_parts_of_coefficients(tf14):
    """a22 / y2 -> 2 and y2 a0 -> 8 on TF(1, 4), where -G211 = kg = 1 and a = 1."""
    g = Grid(16, 17)
    ac = initial_coefficient(tf14)
    for eps in (0.02, 0.01):
        raw = gateaux_coefficients(ScaledState.zero(eps, g, tf14), ac, tf14)
        assert np.max(np.abs(raw.a22_over_y2.values - 2.0)) < 10 * eps
        assert np.max(np.abs(raw.y2a0.values - 8.0)) < 20 * eps
        assert np.max(np.abs(raw.a11.values / eps**2 - 2.0)) < 10 * eps


def test_reduced_operator_approaches_limit(tf14):
    g = Grid(16, 17)
    ac = initial_coefficient(tf14)
    prev = None
    for eps in (0.04, 0.02, 0.01):
        s = ScaledState.zero(eps, g, tf14)
        op = reduce(gateaux_coefficients(s, ac, tf14), ac, tf14, s.xmap, s)
        c = op.coefficients()
        dev = max(np.max(np.abs(c["tt"] / np.where(g.t == 0, 1, g.t)[None, :] - 1) * (g.t != 0)),
                  np.max(np.abs(c["t"] - 5)), np.max(np.abs(c["0t"] - 4)))
        if prev is not None:
            assert dev < 0.6 * prev
        prev = dev


def test_reduced_operator_is_raw_over_divisor(tf14):
    """apply_L (centered t-stencils) and raw / divisor (origin-biased stencils) agree up to O(h^4)."""
    ac = initial_coefficient(tf14)
    diffs = []
    for nt in (33, 65):
        g = Grid(32, nt)
        s = _state(tf14, g=g)
        raw = gateaux_coefficients(s, ac, tf14)
        op = reduce(raw, ac, tf14, s.xmap, s)
        w = _probe(g)
        L = apply_L(op, s, g.t[None, :] * w).values
        diffs.append(np.max(np.abs(L - raw.apply(s, w) / op.divisor[:, None])) / np.max(np.abs(L)))
    assert diffs[0] < 1e-5
    assert diffs[1] < diffs[0] / 8


def test_negative_branch_flips_t():
    """kg < 0 (with K0 < 0 so that kg K0 > 0) selects the reversed t axis and keeps the divisor positive."""
    m = kg_family(1, -4.0, k0=-1.0)
    s = ScaledState.zero(0.05, Grid(16, 17), m)
    assert s.xmap.sign == -1
    ac = initial_coefficient(m)
    op = reduce(gateaux_coefficients(s, ac, m), ac, m, s.xmap, s)
    assert op.sign_branch == -1
    assert np.all(op.divisor > 0)
    assert np.max(np.abs(op.coefficients()["t"] - 5)) < 1.0


def test_limit_operator_coefficients():
    op = ReducedOperator.limit(Grid(16, 17), 2)
    c = op.coefficients()
    np.testing.assert_allclose(c["t"], 8.0)
    np.testing.assert_allclose(c["0t"], 12.0)
    np.testing.assert_allclose(c["xx"], 0.0)
    assert op.bound() == 0.0


def test_phi_over_t_requires_vanishing():
    g = Grid(16, 17)
    X, T = g.mesh
    q = phi_over_t(g, T * np.cos(X))
    np.testing.assert_allclose(q, np.cos(X), atol=1e-12)
    with pytest.raises(SingularityError):
        phi_over_t(g, 1 + T * np.cos(X))
