import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation
from scipy.special import j1

from isoembed.darboux import initial_coefficient
from isoembed.errors import ClosureError, FlatnessError, TurningNumberError
from isoembed.metric import flat_annulus, flat_cylinder
from isoembed.reconstruct import (StripGrid, aligned_error, assemble_embedding, brioschi, curvature_comparison,
                                  developing_map, flat_metric, metric_as_flat, pullback_residual, rigid_align,
                                  surface_curvature)

def test_brioschi_sphere():
    """E = 1, F = 0, G = sin^2 u gives K = 1."""
    u = np.linspace(0.3, 2.8, 9)
    s, c = np.sin(u), np.cos(u)
    one, zero = np.ones_like(u), np.zeros_like(u)
    G, G1, G11 = s**2, 2 * s * c, 2 * (c**2 - s**2)
    K = brioschi(one, zero, G, zero, zero, zero, zero, G1, zero, zero, zero, G11)
    np.testing.assert_allclose(K, 1.0, rtol=1e-13)


def test_brioschi_polar_plane():
    """E = 1, F = 0, G = r^2 is flat."""
    r = np.linspace(0.5, 2.0, 7)
    one, zero = np.ones_like(r), np.zeros_like(r)
    K = brioschi(one, zero, r**2, zero, zero, zero, zero, 2 * r, zero, zero, zero, 2 * one)
    np.testing.assert_allclose(K, 0.0, atol=1e-15)


def test_rigid_align_recovers_rotation():
    rng = np.random.default_rng(3)
    P = rng.normal(size=(3, 40))
    R = Rotation.from_euler("xyz", [0.3, -1.1, 2.0]).as_matrix()
    Q = R @ P + np.array([[1.0], [2.0], [-0.5]])
    R2, c = rigid_align(P, Q)
    np.testing.assert_allclose(R2, R, atol=1e-12)
    assert aligned_error(P, Q) < 1e-12


def test_cylinder_does_not_close():
    """kg = 0 unrolls the strip to a rectangle of width 2 pi, so the p-loop integral is 2 pi."""
    st = StripGrid.uniform(64, 33, 0.01)
    with pytest.raises(ClosureError) as ei:
        developing_map(metric_as_flat(flat_cylinder(), st))
    assert ei.value.details["loop_real"] == pytest.approx(2 * math.pi, abs=1e-12)
    assert ei.value.details["loop_imag"] == pytest.approx(0.0, abs=1e-12)


def test_annulus_pullback_and_curvature():
    m = flat_annulus()
    st = StripGrid.uniform(128, 33, 0.005)
    h = metric_as_flat(m, st)
    surf = assemble_embedding(developing_map(h), None, None, h)
    assert pullback_residual(surf, m) < 1e-8
    assert np.all(surf.z == 0)


def test_cone_turning_number_error():
    """kg = 0.9: the rotation angle turns by 1.8 pi around the strip."""
    st = StripGrid.uniform(64, 17, 0.005)
    with pytest.raises(TurningNumberError) as ei:
        developing_map(metric_as_flat(flat_annulus(k0=0.9), st))
    assert ei.value.details["psi_loop"] == pytest.approx(1.8 * math.pi, abs=1e-10)


def test_closure_error_value():
    st = StripGrid.uniform(128, 17, 0.005)
    with pytest.raises(ClosureError) as ei:
        developing_map(metric_as_flat(flat_annulus(c=0.3), st))
    assert ei.value.details["loop_abs"] == pytest.approx(2 * math.pi * j1(0.3), abs=1e-10)


def test_flatness_guard(tf14):
    from isoembed.darboux import ScaledState
    from isoembed.grid import Grid

    s = ScaledState.zero(0.05, Grid(32, 33), tf14)
    h = flat_metric(s, initial_coefficient(tf14), tf14)
    with pytest.raises(FlatnessError):
        developing_map(h, flat_tol=1e-9)


def test_solution_surface(tf14, tf14_solution):
    s = tf14_solution[0]
    ac = initial_coefficient(tf14)
    h = flat_metric(s, ac, tf14)
    surf = assemble_embedding(developing_map(h), s, ac, h)
    assert curvature_comparison(surf, tf14) < 1e-6
    X1, X2 = surf.strip.mesh
    # K = 4 x2 / B changes sign across the base curve
    Ks = surface_curvature(surf)
    assert np.all(Ks[:, X2[0] > 1e-3] > 0) and np.all(Ks[:, X2[0] < -1e-3] < 0)


def test_export_formats(tmp_path, tf14, tf14_solution):
    s = tf14_solution[0]
    ac = initial_coefficient(tf14)
    h = flat_metric(s, ac, tf14)
    surf = assemble_embedding(developing_map(h), s, ac, h)
    surf.to_csv(tmp_path / "s.csv")
    surf.to_mesh(tmp_path / "s.obj")
    data = np.loadtxt(tmp_path / "s.csv", delimiter=",", skiprows=1)
    assert data.shape == (s.grid.nx * s.grid.nt, 5)
    lines = (tmp_path / "s.obj").read_text().splitlines()
    nv = sum(ln.startswith("v ") for ln in lines)
    faces = [list(map(int, ln.split()[1:])) for ln in lines if ln.startswith("f ")]
    assert nv == s.grid.nx * s.grid.nt
    assert len(faces) == s.grid.nx * (s.grid.nt - 1)
    assert min(min(f) for f in faces) == 1 and max(max(f) for f in faces) == nv
