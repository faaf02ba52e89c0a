"""Flat metric h = g - dz^2, its developing map (p, q), and the embedding r = (p, q, z)."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson

from .darboux import AnsatzCoefficient, ScaledState, z_grid_jet
from .errors import ClosureError, EmbeddingGradientError, FlatnessError, TurningNumberError
from .grid import TWO_PI, Grid, spectral_antiderivative
from .metric import GeodesicMetric, gauss_curvature


@dataclass
class StripGrid:
    """Physical sample points: x1 = y1 nodes (uniform in the computational x) and x2 = eps^2 y2.

    ``xp`` is dx/dy1 at the nodes, so d/dx1 = xp d/dx and dx1 = dx / xp.
    """

    grid: Grid
    x1: np.ndarray
    x2: np.ndarray
    xp: np.ndarray

    @classmethod
    def from_state(cls, s: ScaledState) -> "StripGrid":
        return cls(s.grid, s.y1.copy(), s.x2.copy(), s.chain()[0].copy())

    @classmethod
    def uniform(cls, nx: int, nt: int, delta: float) -> "StripGrid":
        g = Grid(nx, nt)
        return cls(g, g.x.copy(), g.t * delta / g.tmax, np.ones(nx))

    @property
    def mesh(self):
        return np.meshgrid(self.x1, self.x2, indexing="ij")

    @property
    def h2(self) -> float:
        return float(self.x2[1] - self.x2[0])

    def d1(self, f: np.ndarray) -> np.ndarray:
        return self.xp[:, None] * self.grid.dx(f)

    def d2(self, f: np.ndarray, order: int = 1) -> np.ndarray:
        return self.grid.dt(f, order) / (self.h2 / self.grid.ht) ** order


@dataclass
class FlatMetric:
    strip: StripGrid
    E: np.ndarray
    F: np.ndarray
    G: np.ndarray
    E1: np.ndarray
    E2: np.ndarray
    F1: np.ndarray
    F2: np.ndarray
    G1: np.ndarray
    G2: np.ndarray
    curvature: np.ndarray
    z: np.ndarray | None = None

    @property
    def flatness_residual(self) -> float:
        return float(np.max(np.abs(self.curvature)))


def brioschi(E, F, G, E1, E2, F1, F2, G1, G2, E22, F12, G11):
    """Gaussian curvature from a first fundamental form and its partials."""
    m1 = np.array([[-0.5 * E22 + F12 - 0.5 * G11, 0.5 * E1, F1 - 0.5 * E2],
                   [F2 - 0.5 * G1, E, F],
                   [0.5 * G2, F, G]])
    m2 = np.array([[np.zeros_like(E), 0.5 * E2, 0.5 * G1],
                   [0.5 * E2, E, F],
                   [0.5 * G1, F, G]])
    det1 = np.linalg.det(np.moveaxis(m1, (0, 1), (-2, -1)))
    det2 = np.linalg.det(np.moveaxis(m2, (0, 1), (-2, -1)))
    return (det1 - det2) / (E * G - F**2) ** 2


def _flat_from_jets(strip: StripGrid, m: GeodesicMetric, zj: dict | None) -> FlatMetric:
    X1, X2 = strip.mesh
    B = m.B(X1, X2)
    B1, B2, B22 = m.B(X1, X2, 1, 0), m.B(X1, X2, 0, 1), m.B(X1, X2, 0, 2)
    if zj is None:
        zero = np.zeros_like(B)
        zj = {k: zero for k in ("z", "z1", "z2", "z11", "z12", "z22", "z112", "z122")}
    z1, z2, z11, z12, z22 = zj["z1"], zj["z2"], zj["z11"], zj["z12"], zj["z22"]
    E = B**2 - z1**2
    F = -z1 * z2
    G = 1 - z2**2
    if np.any(E <= 0) or np.any(E * G - F**2 <= 0):
        raise EmbeddingGradientError("g - dz^2 is not positive definite on the strip")
    E1 = 2 * B * B1 - 2 * z1 * z11
    E2 = 2 * B * B2 - 2 * z1 * z12
    E22 = 2 * (B2**2 + B * B22) - 2 * (z12**2 + z1 * zj["z122"])
    F1 = -(z11 * z2 + z1 * z12)
    F2 = -(z12 * z2 + z1 * z22)
    F12 = -(zj["z112"] * z2 + z11 * z22 + z12**2 + z1 * zj["z122"])
    G1 = -2 * z2 * z12
    G2 = -2 * z2 * z22
    G11 = -2 * (z12**2 + z2 * zj["z112"])
    K = brioschi(E, F, G, E1, E2, F1, F2, G1, G2, E22, F12, G11)
    return FlatMetric(strip, E, F, G, E1, E2, F1, F2, G1, G2, K, zj.get("z"))


def flat_metric(s: ScaledState, a: AnsatzCoefficient, m: GeodesicMetric) -> FlatMetric:
    """h = g - dz^2 on the state grid, from the third-order jet of z."""
    return _flat_from_jets(StripGrid.from_state(s), m, z_grid_jet(s, a, 3))


def metric_as_flat(m: GeodesicMetric, strip: StripGrid) -> FlatMetric:
    """h = g itself (the z = 0 case)."""
    return _flat_from_jets(strip, m, None)


@dataclass
class DevelopingMap:
    p: np.ndarray
    q: np.ndarray
    psi: np.ndarray
    turning_number: float
    psi_loop: float
    defects: dict = field(default_factory=dict)


def _integrate_strip(strip: StripGrid, f1_base: np.ndarray, f2: np.ndarray):
    """Integrate a closed 1-form f1 dx1 + f2 dx2: along x2 = x2[0] in x1, then up each column.

    Returns (values, loop) where loop is the integral of f1 over one period of
    the base line.
    """
    # dx1 = dx / xp on the uniform computational grid
    f1 = f1_base / strip.xp
    base, mean = spectral_antiderivative(np.real(f1), axis=0)
    if np.iscomplexobj(f1):
        bi, mi = spectral_antiderivative(np.imag(f1), axis=0)
        base, mean = base + 1j * bi, mean + 1j * mi
    loop = TWO_PI * mean
    col = cumulative_simpson(np.real(f2), x=strip.x2, axis=1, initial=0.0)
    if np.iscomplexobj(f2):
        col = col + 1j * cumulative_simpson(np.imag(f2), x=strip.x2, axis=1, initial=0.0)
    return base[:, None] + col, loop


def developing_map(h: FlatMetric, flat_tol: float = 1e-5, loop_tol: float = 1e-6) -> DevelopingMap:
    """Rotation angle psi and (p, q) with dp + i dq = e^{i psi} (w1 - i w2).

    Coframe: w1 = a1 dx1 + a2 dx2, w2 = b2 dx2 with a1 = sqrt(E),
    a2 = F / sqrt(E), b2 = sqrt(EG - F^2) / sqrt(E).
    """
    if h.flatness_residual > flat_tol:
        raise FlatnessError(f"curvature of h is {h.flatness_residual:.3e} > {flat_tol:.1e}; dp, dq would not be closed",
                            flatness=h.flatness_residual)
    st = h.strip
    E, F, G = h.E, h.F, h.G
    a1 = np.sqrt(E)
    a2 = F / a1
    W = E * G - F**2
    b2 = np.sqrt(W) / a1
    # partials from the analytic partials of E, F, G
    a1_2 = h.E2 / (2 * a1)
    a2_1 = h.F1 / a1 - F * h.E1 / (2 * a1**3)
    W1 = h.E1 * G + E * h.G1 - 2 * F * h.F1
    b2_1 = W1 / (2 * np.sqrt(W) * a1) - np.sqrt(W) * h.E1 / (2 * a1**3)
    th1 = (a1_2 - a2_1) / b2
    th2 = (th1 * a2 - b2_1) / a1
    psi, psi_loop = _integrate_strip(st, th1[:, 0], th2)
    turns = psi_loop / TWO_PI
    if abs(turns - round(turns)) > loop_tol:
        raise TurningNumberError(f"loop integral of dpsi is {psi_loop:.12g}, not a multiple of 2 pi",
                                 psi_loop=psi_loop)
    e = np.exp(1j * psi)
    w1 = e * a1
    w2 = e * (a2 - 1j * b2)
    pq, loop = _integrate_strip(st, w1[:, 0], w2)
    defects = {"p": float(abs(loop.real)), "q": float(abs(loop.imag))}
    if max(defects.values()) > loop_tol:
        raise ClosureError(f"dp, dq not exact around the strip: loop integral {loop.real:.10g} + {loop.imag:.10g} i",
                           loop_real=float(loop.real), loop_imag=float(loop.imag), loop_abs=float(abs(loop)))
    return DevelopingMap(pq.real, pq.imag, psi, float(turns), float(psi_loop), defects)


@dataclass
class EmbeddingSurface:
    strip: StripGrid
    p: np.ndarray
    q: np.ndarray
    z: np.ndarray
    psi: np.ndarray
    defects: dict

    def coordinates(self) -> np.ndarray:
        return np.stack([self.p, self.q, self.z])

    def to_csv(self, path) -> None:
        X1, X2 = self.strip.mesh
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x1", "x2", "p", "q", "z"])
            for row in zip(X1.ravel(), X2.ravel(), self.p.ravel(), self.q.ravel(), self.z.ravel()):
                w.writerow([repr(float(v)) for v in row])

    def to_mesh(self, path) -> None:
        """'v p q z' vertex lines and 1-based quad faces, wrapping in the periodic direction."""
        nx, nt = self.p.shape
        with open(path, "w", encoding="utf-8") as fh:
            for i in range(nx):
                for j in range(nt):
                    fh.write(f"v {self.p[i, j]!r} {self.q[i, j]!r} {self.z[i, j]!r}\n")
            for i in range(nx):
                ip = (i + 1) % nx
                for j in range(nt - 1):
                    a, b = i * nt + j + 1, ip * nt + j + 1
                    fh.write(f"f {a} {b} {b + 1} {a + 1}\n")


def assemble_embedding(dm: DevelopingMap, s: ScaledState | None, a: AnsatzCoefficient | None,
                       h: FlatMetric) -> EmbeddingSurface:
    if h.z is not None:
        z = np.asarray(h.z)
    elif s is not None and a is not None:
        z = z_grid_jet(s, a, 0)["z"]
    else:
        z = np.zeros_like(dm.p)
    return EmbeddingSurface(h.strip, dm.p, dm.q, np.broadcast_to(z, dm.p.shape).copy(), dm.psi, dict(dm.defects))


# ------------------------------------------------------------ verification

def pullback_residual(surf: EmbeddingSurface, m: GeodesicMetric) -> float:
    """sup |dp^2 + dq^2 + dz^2 - g| with derivatives taken numerically from the surface samples."""
    st = surf.strip
    X1, X2 = st.mesh
    r = surf.coordinates()
    r1 = np.array([st.d1(c) for c in r])
    r2 = np.array([st.d2(c) for c in r])
    B = m.B(X1, X2)
    e11 = np.sum(r1 * r1, axis=0) - B**2
    e12 = np.sum(r1 * r2, axis=0)
    e22 = np.sum(r2 * r2, axis=0) - 1.0
    return float(max(np.max(np.abs(e11)), np.max(np.abs(e12)), np.max(np.abs(e22))))


def surface_curvature(surf: EmbeddingSurface) -> np.ndarray:
    """Gaussian curvature of the embedded surface from numerical fundamental forms."""
    st = surf.strip
    r = surf.coordinates()
    r1 = np.array([st.d1(c) for c in r])
    r2 = np.array([st.d2(c) for c in r])
    r11 = np.array([st.d1(c) for c in r1])
    r12 = np.array([st.d2(c) for c in r1])
    r22 = np.array([st.d2(c, 2) for c in r])
    n = np.cross(r1, r2, axis=0)
    n = n / np.linalg.norm(n, axis=0)
    E, F, G = (np.sum(u * v, axis=0) for u, v in ((r1, r1), (r1, r2), (r2, r2)))
    L, M, N = (np.sum(u * n, axis=0) for u in (r11, r12, r22))
    return (L * N - M**2) / (E * G - F**2)


def curvature_comparison(surf: EmbeddingSurface, m: GeodesicMetric) -> float:
    X1, X2 = surf.strip.mesh
    return float(np.max(np.abs(surface_curvature(surf) - gauss_curvature(m, X1, X2))))


def rigid_align(P: np.ndarray, Q: np.ndarray, allow_reflection: bool = False):
    """Best rotation R and shift c with R P + c ~ Q (Kabsch).  P, Q: (d, n) point sets."""
    pc = P.mean(axis=1, keepdims=True)
    qc = Q.mean(axis=1, keepdims=True)
    H = (P - pc) @ (Q - qc).T
    U, _, Vt = np.linalg.svd(H)
    D = np.eye(P.shape[0])
    if not allow_reflection and np.linalg.det(Vt.T @ U.T) < 0:
        D[-1, -1] = -1.0
    R = Vt.T @ D @ U.T
    return R, qc - R @ pc


def aligned_error(P: np.ndarray, Q: np.ndarray) -> float:
    R, c = rigid_align(P, Q)
    return float(np.max(np.abs(R @ P + c - Q)))
