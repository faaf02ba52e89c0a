"""Height-function ansatz, scaling to the reference rectangle and the scaled Darboux residual.

The unknown height is z = x2^(alpha+1) (a(x1) + w) with w = eps u(y1, y2),
x1 = y1 and x2 = eps^2 y2.  On the grid u is stored as u = y2 * v, which is the
representation in which every inverse power of y2 in the residual is exact:
u / y2 = v.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coords import XMap, x_transform
from .errors import DomainError, EmbeddingGradientError, PreconditionError, SingularityError
from .grid import Grid, GridField, fourier_interp
from .metric import CurvatureFactorization, GeodesicMetric, TrigPoly, christoffel, gauss_curvature


@dataclass
class AnsatzCoefficient:
    """a(x1) = sqrt(K0 det g / (kg alpha (alpha+1)^2)) on the base curve, with derivatives."""

    metric: GeodesicMetric
    _num: TrigPoly = field(repr=False)

    def radicand(self, x1, d: int = 0):
        """a^2 and its first two derivatives, by the quotient rule."""
        m = self.metric
        c = m.alpha * (m.alpha + 1) ** 2
        n0, n1, n2 = (self._num(x1, j) for j in range(3))
        k0, k1, k2 = (m.kg(x1, j) for j in range(3))
        if d == 0:
            return n0 / (c * k0)
        if d == 1:
            return (n1 * k0 - n0 * k1) / (c * k0**2)
        return (n2 / k0 - 2 * n1 * k1 / k0**2 - n0 * k2 / k0**2 + 2 * n0 * k1**2 / k0**3) / c

    def __call__(self, x1, d: int = 0):
        r = self.radicand(x1)
        a = np.sqrt(r)
        if d == 0:
            return a
        a1 = self.radicand(x1, 1) / (2 * a)
        if d == 1:
            return a1
        if d == 2:
            return (self.radicand(x1, 2) - 2 * a1**2) / (2 * a)
        raise ValueError("derivatives of a above order 2 are not coded")

    def derivatives(self, x1, order: int = 2) -> list[np.ndarray]:
        return [self(x1, d) for d in range(order + 1)]


def initial_coefficient(m: GeodesicMetric, fac: CurvatureFactorization | None = None, n: int = 256) -> AnsatzCoefficient:
    """Leading coefficient of the height ansatz.

    Raises PreconditionError naming the first sample where the radicand is not
    positive (this happens exactly where kg K0 <= 0).
    """
    p = 2 * m.alpha + 1
    top = m._coef(p)
    # K0(x1, 0) = -D(x1, 0) = -(2a+1)(2a) c_{2a+1}(x1); det g = 1 on the curve
    num = top.scaled(-p * (p - 1))
    ac = AnsatzCoefficient(m, num)
    x1 = fac.x1 if fac is not None else np.arange(n) * 2 * np.pi / n
    r = ac.radicand(x1)
    bad = np.nonzero(~(r > 0))[0]
    if len(bad):
        i = int(bad[0])
        raise PreconditionError(
            f"a(x1)^2 = K0 det g / (kg alpha (alpha+1)^2) is not positive at sample {i} (x1 = {x1[i]:.6g}): {r[i]:.6g}",
            sample=i, x1=float(x1[i]), radicand=float(r[i]))
    return ac


@dataclass
class ScaledState:
    """Unknown u = y2 * v on G = [0, 2pi) x [-2, 2] in computational coordinates (x, y2).

    Grid nodes are uniform in x; the physical y1 = x1 nodes are x_map^{-1}(x).
    """

    epsilon: float
    grid: Grid
    v: np.ndarray
    xmap: XMap

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        self.v = np.asarray(self.v, dtype=float)
        if self.v.shape != self.grid.shape:
            raise ValueError("state shape does not match grid")

    @classmethod
    def zero(cls, epsilon: float, grid: Grid, metric: GeodesicMetric, xmap: XMap | None = None) -> "ScaledState":
        return cls(epsilon, grid, np.zeros(grid.shape), xmap or x_transform(metric))

    def with_v(self, v) -> "ScaledState":
        return ScaledState(self.epsilon, self.grid, v, self.xmap)

    @property
    def alpha(self) -> int:
        return self.xmap.metric.alpha

    @property
    def delta(self) -> float:
        return 2 * self.epsilon**2

    @property
    def y1(self) -> np.ndarray:
        if "_y1" not in self.__dict__:
            self.__dict__["_y1"] = self.grid.x.copy() if self.xmap.is_identity else self.xmap.inverse(self.grid.x)
        return self.__dict__["_y1"]

    @property
    def y2(self) -> np.ndarray:
        return self.grid.t

    @property
    def x2(self) -> np.ndarray:
        return self.epsilon**2 * self.grid.t

    @property
    def u(self) -> np.ndarray:
        return self.grid.t[None, :] * self.v

    def chain(self):
        """x'(y1), x''(y1), x'''(y1) at the nodes."""
        if self.xmap.is_identity:
            one = np.ones(self.grid.nx)
            return one, 0 * one, 0 * one
        return tuple(self.xmap.derivative(self.y1, d) for d in (1, 2, 3))

    def budget(self) -> float:
        """C^4-type norm max_{|b| <= 4} sup |d^b u| by discrete derivatives."""
        return c4_norm(self.grid, self.u)


def c4_norm(grid: Grid, u: np.ndarray) -> float:
    best = 0.0
    for p in range(5):
        up = grid.dx(u, p) if p else u
        for q in range(5 - p):
            d = grid.dt(up, q) if q else up
            best = max(best, float(np.max(np.abs(d))))
    return best


def v_derivatives(grid: Grid, v: np.ndarray, max_t: int = 2, max_x: int = 2) -> dict:
    """Derivatives d_x^p d_t^q v on the grid.

    Spectral in x; in t, 4th-order stencils leaning toward t = 0 for q <= 2
    (see grid.origin_biased_matrix) and centered ones above.
    """
    out = {}
    for q in range(max_t + 1):
        vq = grid.dt(v, q, biased=q <= 2) if q else v
        for p in range(max_x + 1 - min(q, max_x)):
            out[(p, q)] = grid.dx(vq, p) if p else vq
    return out


def u_jet(state: ScaledState, v: np.ndarray | None = None) -> dict:
    """y-derivatives of u = y2 * v up to second order, plus the exact quotient u / y2."""
    return jet_from_v(state, state.v if v is None else v)


def jet_from_v(state: ScaledState, v: np.ndarray) -> dict:
    g = state.grid
    y2 = g.t[None, :]
    d = v_derivatives(g, v, max_t=2, max_x=2)
    xp, xpp, _ = (c[:, None] for c in state.chain())
    ux = y2 * d[(1, 0)]
    uxx = y2 * d[(2, 0)]
    return {
        "uq": v,
        "u": y2 * v,
        "u1": xp * ux,
        "u11": xp**2 * uxx + xpp * ux,
        "u2": v + y2 * d[(0, 1)],
        "u22": 2 * d[(0, 1)] + y2 * d[(0, 2)],
        "u12": xp * (d[(1, 0)] + y2 * d[(1, 1)]),
    }


@dataclass
class MetricSamples:
    """Metric quantities evaluated at (y1, eps^2 y2) on the state grid."""

    B: np.ndarray
    G111: np.ndarray
    G112: np.ndarray
    G211: np.ndarray
    K0: np.ndarray
    Hq: np.ndarray
    a: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    x2: np.ndarray


def metric_samples(state: ScaledState, ac: AnsatzCoefficient, m: GeodesicMetric) -> MetricSamples:
    key = ("_ms", id(ac), id(m), state.epsilon)
    cache = state.__dict__.setdefault("_cache", {})
    if key in cache:
        return cache[key]
    y1 = state.y1[:, None]
    x2 = state.x2[None, :]
    y1b, x2b = np.broadcast_arrays(y1, x2)
    ch = christoffel(m, y1b, x2b)
    B = m.B(y1b, x2b)
    D = m.curvature_quotient(y1b, x2b)
    alpha = m.alpha
    r = ac.radicand(y1b)
    # H / x2 with H = -G211 alpha (alpha+1)^2 a^2 - K0 B^2, expanded so the zero at x2 = 0 cancels exactly
    Hq = B * (alpha * (alpha + 1) ** 2 * r * m.kg_increment(y1b, x2b) + m.curvature_quotient_increment(y1b, x2b))
    a0, a1, a2 = ac.derivatives(state.y1)
    ms = MetricSamples(B, ch.gamma111, ch.gamma112, ch.gamma211, -D / B, Hq,
                       a0[:, None] + 0 * x2, a1[:, None] + 0 * x2, a2[:, None] + 0 * x2, x2b)
    cache[key] = ms
    return ms


def residual_terms(eps: float, alpha: int, y2, ms: MetricSamples, j: dict) -> dict:
    """Bracketed groups of the scaled residual."""
    A = ms.a + eps * j["u"]
    A1 = ms.a1 + eps * j["u1"]
    P = eps**2 * y2 * (ms.a2 + eps * j["u11"]) - ms.G111 * eps**2 * y2 * A1 - ms.G211 * ((alpha + 1) * A + eps * y2 * j["u2"])
    Q1 = y2 * j["u22"] + 2 * (alpha + 1) * j["u2"]
    P1q = eps * (ms.a2 + eps * j["u11"]) - ms.G111 * eps * A1 - ms.G211 * j["u2"]
    R = eps * y2 * j["u12"] + (alpha + 1) * A1 - ms.G112 * eps**2 * y2 * A1
    W = (alpha + 1) * A + eps * y2 * j["u2"]
    return {"A": A, "A1": A1, "P": P, "Q1": Q1, "P1q": P1q, "R": R, "W": W}


def residual_from_jet(eps: float, alpha: int, y2, ms: MetricSamples, j: dict) -> np.ndarray:
    """Pointwise scaled residual F(u, eps) from the jet of u.

    Every (eps y2)^-1 group is expanded so that only the exact quotient
    j["uq"] = u / y2 and the closed-form metric quotient ms.Hq appear.
    """
    T = alpha * (alpha + 1)
    x2 = ms.x2
    r = residual_terms(eps, alpha, y2, ms, j)
    F = (r["P"] * r["Q1"]
         + T * r["A"] * r["P1q"]
         + eps * ms.Hq
         - ms.G211 * T * (alpha + 1) * (2 * ms.a + eps * j["u"]) * j["uq"]
         - eps * r["R"] ** 2
         + eps * ms.K0 * (x2 ** (2 * alpha + 1) * r["A1"] ** 2 + ms.B**2 * x2 ** (2 * alpha - 1) * r["W"] ** 2))
    return F


@dataclass
class ScaledResidual:
    values: GridField
    F0: GridField | None = None


def scaled_residual(state: ScaledState, ac: AnsatzCoefficient, m: GeodesicMetric,
                    fac: CurvatureFactorization | None = None) -> ScaledResidual:
    ms = metric_samples(state, ac, m)
    F = residual_from_jet(state.epsilon, m.alpha, state.y2[None, :], ms, u_jet(state))
    bad = ~np.isfinite(F)
    if np.any(bad):
        i, k = np.argwhere(bad)[0]
        raise SingularityError(f"non-finite scaled residual at node ({i}, {k}), y2 = {state.y2[k]:.4g}",
                               node=(int(i), int(k)))
    F0 = None
    if not np.any(state.v):
        F0 = GridField(state.grid, F / state.epsilon)
    return ScaledResidual(GridField(state.grid, F), F0)


# ---------------------------------------------------------------- unscaled form

def unscaled_darboux(zj: dict, m: GeodesicMetric, x1, x2) -> np.ndarray:
    """det(d_ij z - Gamma^k_ij d_k z) - K det g (1 - g^ij d_i z d_j z).

    ``zj`` holds z1, z2, z11, z12, z22 at the points.
    """
    B = m.check_positive(x1, x2)
    G111, G112, G211 = christoffel(m, x1, x2).as_tuple()
    K = gauss_curvature(m, x1, x2)
    grad2 = zj["z1"] ** 2 / B**2 + zj["z2"] ** 2
    if np.any(grad2 >= 1):
        raise EmbeddingGradientError("g^ij dz_i dz_j >= 1", max_value=float(np.max(grad2)))
    m11 = zj["z11"] - G111 * zj["z1"] - G211 * zj["z2"]
    m12 = zj["z12"] - G112 * zj["z1"]
    m22 = zj["z22"]
    return m11 * m22 - m12**2 - K * B**2 * (1 - grad2)


def z_jet_from_wf(alpha: int, x2, wf: dict, order: int = 2) -> dict:
    """Derivatives of z = x2^(alpha+1) Wf from those of Wf, by Leibniz in x2.

    ``wf[(p, q)]`` is d1^p d2^q Wf for p + q <= order; returns keys like
    "z", "z1", "z12", "z222".
    """
    n = alpha + 1
    out = {}
    for p in range(order + 1):
        for q in range(order + 1 - p):
            acc = 0.0
            for i in range(min(q, n) + 1):
                acc = acc + math.comb(q, i) * math.perm(n, i) * np.power(x2, n - i) * wf[(p, q - i)]
            out["z" + "1" * p + "2" * q] = acc
    return out


def wf_from_u_derivs(eps: float, aders: list, uders: dict) -> dict:
    """Physical derivatives of Wf = a(x1) + eps u(x1, x2 / eps^2)."""
    out = {}
    for (p, q), val in uders.items():
        w = eps * val / eps ** (2 * q)
        if q == 0 and p < len(aders):
            w = w + aders[p]
        out[(p, q)] = w
    return out


def u_physical_derivs(state: ScaledState, order: int = 2, v: np.ndarray | None = None) -> dict:
    """d_y1^p d_y2^q u on the grid, p + q <= order, from the y2 * v representation."""
    g = state.grid
    v = state.v if v is None else v
    y2 = g.t[None, :]
    d = v_derivatives(g, v, max_t=order, max_x=order)
    # d_t^q (t v) = t d^q v + q d^(q-1) v
    ut = {}
    for (p, q), val in d.items():
        if p + q > order:
            continue
        ut[(p, q)] = y2 * val + (q * d[(p, q - 1)] if q else 0.0)
    xp, xpp, xppp = (c[:, None] for c in state.chain())
    out = {}
    for q in range(order + 1):
        out[(0, q)] = ut[(0, q)]
        if order - q >= 1:
            out[(1, q)] = xp * ut[(1, q)]
        if order - q >= 2:
            out[(2, q)] = xp**2 * ut[(2, q)] + xpp * ut[(1, q)]
        if order - q >= 3:
            out[(3, q)] = xp**3 * ut[(3, q)] + 3 * xp * xpp * ut[(2, q)] + xppp * ut[(1, q)]
    return out


def z_grid_jet(state: ScaledState, ac: AnsatzCoefficient, order: int = 2) -> dict:
    """z and its physical partials up to ``order`` on the grid (x1 = y1 nodes, x2 = eps^2 y2)."""
    ud = u_physical_derivs(state, order)
    aders = [c[:, None] for c in ac.derivatives(state.y1, min(order, 2))]
    wf = wf_from_u_derivs(state.epsilon, aders, ud)
    if order >= 3:
        # a''' is not coded; the x1-derivatives of a beyond order 2 come from spectral differentiation
        xp = state.chain()[0][:, None]
        a3 = xp * state.grid.dx(ac(state.y1, 2)[:, None] * np.ones((1, state.grid.nt)))
        wf[(3, 0)] = wf[(3, 0)] + a3
    return z_jet_from_wf(state.alpha, state.x2[None, :], wf, order)


def z_from_state(state: ScaledState, ac: AnsatzCoefficient, point) -> dict:
    """z and its partials up to second order at a physical point (x1, x2) with |x2| <= delta."""
    x1, x2 = (float(c) for c in point)
    if abs(x2) > state.delta * (1 + 1e-12):
        raise DomainError(f"|x2| = {abs(x2):.3g} exceeds delta = {state.delta:.3g}")
    eps = state.epsilon
    ud = u_physical_derivs(state, 2)
    xc = float(state.xmap(x1)) if not state.xmap.is_identity else x1
    y2 = x2 / eps**2
    vals = {k: _interp(state.grid, f, xc, y2) for k, f in ud.items()}
    aders = [float(c[0]) for c in ac.derivatives(np.array([x1]), 2)]
    wf = wf_from_u_derivs(eps, aders, vals)
    return z_jet_from_wf(state.alpha, x2, wf, 2)


def _interp(grid: Grid, f: np.ndarray, x: float, t: float, npts: int = 6) -> float:
    """Fourier interpolation in x, local Lagrange interpolation in t."""
    col = fourier_interp(f, x, axis=0)[0]
    tt = grid.t
    j = int(np.clip(np.searchsorted(tt, t) - npts // 2, 0, len(tt) - npts))
    nodes = tt[j:j + npts]
    vals = col[j:j + npts]
    out = 0.0
    for i in range(npts):
        li = 1.0
        for k in range(npts):
            if k != i:
                li *= (t - nodes[k]) / (nodes[i] - nodes[k])
        out += li * vals[i]
    return float(out)
