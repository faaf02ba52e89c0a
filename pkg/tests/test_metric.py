import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isoembed.coords import x_transform
from isoembed.errors import BranchError, DegenerateMetricError, OrderMismatchError
from isoembed.metric import (GeodesicMetric, TrigPoly, check_alpha_surface, christoffel, factor_K0, flat_annulus,
                             gauss_curvature, kg_family)
from isoembed.metric import test_family as tf_metric


def _num_K(m, x1, x2, h=1e-4):
    """K = -B_22 / B by central differences of B itself."""
    B = m.B(x1, x2)
    B22 = (m.B(x1, x2 + h) - 2 * B + m.B(x1, x2 - h)) / h**2
    return -B22 / B


@pytest.mark.parametrize("alpha,mu", [(1, 4.0), (2, 6.0), (3, 1.5)])
def test_gauss_curvature_matches_difference_quotient(alpha, mu):
    m = tf_metric(alpha, mu)
    x1 = np.linspace(0, 6, 7)
    x2 = 0.3
    np.testing.assert_allclose(gauss_curvature(m, x1, x2), _num_K(m, x1, x2, 1e-4), rtol=1e-5)


def test_tf_family_curvature_quotient():
    m = tf_metric(2, 6.0)
    x1, x2 = np.array([0.3]), 0.01
    # K = mu x2^(2 alpha - 1) / B
    assert gauss_curvature(m, x1, x2)[0] == pytest.approx(6.0 * x2**3 / m.B(x1, x2)[0], rel=1e-12)


def test_christoffel_against_difference_quotients():
    m = kg_family(1, 4.0, c=0.2, mode=2)
    x1, x2, h = np.array([0.7, 2.1]), 0.03, 1e-6
    B = m.B(x1, x2)
    B1 = (m.B(x1 + h, x2) - m.B(x1 - h, x2)) / (2 * h)
    B2 = (m.B(x1, x2 + h) - m.B(x1, x2 - h)) / (2 * h)
    c = christoffel(m, x1, x2)
    np.testing.assert_allclose(c.gamma111, B1 / B, rtol=1e-8)
    np.testing.assert_allclose(c.gamma112, B2 / B, rtol=1e-8)
    np.testing.assert_allclose(c.gamma211, -B * B2, rtol=1e-8)


def test_base_curve_normalisation():
    m = kg_family(1, 4.0, c=0.2)
    x1 = np.linspace(0, 2 * np.pi, 9)
    np.testing.assert_allclose(m.B(x1, 0.0), 1.0)
    np.testing.assert_allclose(m.B(x1, 0.0, d2=1), m.kg(x1))


def test_factor_K0_recovers_mu():
    fac = factor_K0(tf_metric(2, 6.0))
    np.testing.assert_allclose(fac.K0_on_curve, 6.0, rtol=1e-12)


def test_factor_K0_rejects_flat_order():
    with pytest.raises(OrderMismatchError):
        factor_K0(flat_annulus())


def test_check_positive_raises():
    m = tf_metric(1, 4.0)
    with pytest.raises(DegenerateMetricError):
        m.check_positive(np.array([0.0]), 2.0)


@pytest.mark.parametrize("alpha", [1, 2, 3])
def test_tf_is_alpha_surface(alpha):
    assert check_alpha_surface(tf_metric(alpha, 4.0)).verdict


def test_negative_mu_fails_sign_condition():
    rep = check_alpha_surface(tf_metric(1, -4.0))
    assert not rep.cond_order.passed
    assert rep.failures() == ["sign condition kg d2^(2a-1) K > 0 on the base curve"]


@settings(max_examples=20, deadline=None)
@given(k0=st.floats(0.3, 3.0))
def test_total_turning_equals_2pi_k0(k0):
    rep = check_alpha_surface(kg_family(1, 4.0, k0=k0))
    assert rep.cond_total_turning.value == pytest.approx(2 * math.pi * k0, rel=1e-12)
    assert rep.cond_total_turning.passed == (abs(k0 - 1.0) < 1e-9)


def test_metric_round_trip():
    m = kg_family(2, 3.0, c=0.1, mode=3)
    m2 = GeodesicMetric.from_dict(m.to_dict())
    x1 = np.linspace(0, 6, 5)
    np.testing.assert_allclose(m2.B(x1, 0.02), m.B(x1, 0.02))


def test_trigpoly_derivative_and_antiderivative():
    p = TrigPoly(0.5, ((2, 0.3),), ((1, -0.1),))
    x = np.linspace(0, 6, 11)
    np.testing.assert_allclose(p(x, 1), -0.6 * np.sin(2 * x) - 0.1 * np.cos(x), atol=1e-14)
    h = 1e-6
    np.testing.assert_allclose((p.antiderivative(x + h) - p.antiderivative(x - h)) / (2 * h), p(x), atol=1e-8)


def test_x_transform_identity_for_constant_kg():
    xm = x_transform(tf_metric(1, 4.0))
    assert xm.is_identity
    y = np.linspace(0, 6, 7)
    np.testing.assert_allclose(xm(y), y, atol=1e-13)


def test_x_transform_periodic_and_invertible():
    xm = x_transform(kg_family(1, 4.0, c=0.3, mode=2))
    assert xm(2 * np.pi) == pytest.approx(2 * np.pi, abs=1e-12)
    y = np.linspace(0.1, 6.0, 9)
    np.testing.assert_allclose(xm.inverse(xm(y)), y, atol=1e-12)
    h = 1e-6
    np.testing.assert_allclose((xm(y + h) - xm(y - h)) / (2 * h), xm.derivative(y), rtol=1e-8)


def test_x_transform_rejects_sign_change():
    with pytest.raises(BranchError):
        x_transform(kg_family(1, 4.0, k0=0.2, c=0.5))
