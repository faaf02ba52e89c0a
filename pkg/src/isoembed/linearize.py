"""Linearization of the scaled residual and the reduced second-order operator.

The scaled residual is quadratic in the jet (u/y2, u, u1, u2, u11, u12, u22),
so its Gateaux derivative is the jet of phi contracted with the partial
derivatives of the residual with respect to each jet entry.  Coefficients use
the convention  sum a_ij d_ij phi  (a12 is half the mixed coefficient).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .coords import XMap, x_transform  # noqa: F401  (re-export)
from .darboux import (AnsatzCoefficient, ScaledState, jet_from_v, metric_samples,
                      residual_terms)
from .errors import SingularityError
from .grid import Grid, GridField, spectral_matrix
from .metric import GeodesicMetric

JET_KEYS = ("uq", "u", "u1", "u2", "u11", "u12", "u22")


def jet_partials(eps: float, alpha: int, y2, ms, j: dict) -> dict:
    """Partial derivatives of the pointwise residual with respect to each jet entry."""
    T = alpha * (alpha + 1)
    n = alpha + 1
    x2 = ms.x2
    r = residual_terms(eps, alpha, y2, ms, j)
    A, A1, P, Q1, P1q, R, W = (r[k] for k in ("A", "A1", "P", "Q1", "P1q", "R", "W"))
    wK1 = 2 * eps * ms.K0 * x2 ** (2 * alpha + 1) * A1
    wK2 = 2 * eps * ms.K0 * ms.B**2 * x2 ** (2 * alpha - 1) * W
    c = {}
    c["u22"] = P * y2
    c["u11"] = eps**3 * y2 * Q1 + eps**2 * T * A
    c["u12"] = -2 * eps**2 * y2 * R
    c["u1"] = (-ms.G111 * eps**3 * y2 * Q1 - ms.G111 * eps**2 * T * A
               - 2 * eps * R * (n * eps - ms.G112 * eps**3 * y2) + wK1 * eps)
    c["u2"] = -ms.G211 * eps * y2 * Q1 + 2 * n * P - ms.G211 * T * A + wK2 * eps * y2
    c["u"] = (-ms.G211 * n * eps * Q1 + T * eps * P1q - ms.G211 * T * n * eps * j["uq"]
              + wK2 * n * eps)
    c["uq"] = -ms.G211 * T * n * (2 * ms.a + eps * j["u"])
    return {k: np.broadcast_to(v, ms.B.shape).copy() for k, v in c.items()}


@dataclass
class RawLinearization:
    """Gateaux coefficients on the state grid in (y1, y2).

    ``y2a0`` = y2 * a0 is stored instead of a0, which has a 1/y2 part.  The
    ``btilde`` fields are the exact eps-remainders of the leading parts:
    a11 = eps^2 (a alpha (alpha+1) + eps bt11), a22 / y2 = -G211 (alpha+1) a + eps bt22,
    y2 a0 = -2 G211 a alpha (alpha+1)^2 + eps bt0, with G211 at (y1, eps^2 y2).
    """

    epsilon: float
    alpha: int
    a11: GridField
    a12: GridField
    a22: GridField
    a1: GridField
    a2: GridField
    a0u: GridField
    a0q: GridField
    a12_over_y2: GridField
    a22_over_y2: GridField
    y2a0: GridField
    btilde11: GridField
    btilde12: GridField
    btilde22: GridField
    btilde0: GridField
    btilde1: GridField
    btilde2: GridField

    def apply(self, state: ScaledState, phi_over_y2: np.ndarray) -> np.ndarray:
        """Gateaux derivative applied to phi = y2 * phi_over_y2."""
        return apply_partials(self.partials(), jet_from_v(state, phi_over_y2))

    def partials(self) -> dict:
        return {"uq": self.a0q.values, "u": self.a0u.values, "u1": self.a1.values, "u2": self.a2.values,
                "u11": self.a11.values, "u12": 2 * self.a12.values, "u22": self.a22.values}


def apply_partials(c: dict, jet: dict) -> np.ndarray:
    return sum(c[k] * jet[k] for k in JET_KEYS)


def gateaux_coefficients(s: ScaledState, a: AnsatzCoefficient, m: GeodesicMetric, fac=None) -> RawLinearization:
    ms = metric_samples(s, a, m)
    eps, alpha = s.epsilon, m.alpha
    y2 = s.y2[None, :]
    j = jet_from_v(s, s.v)
    c = jet_partials(eps, alpha, y2, ms, j)
    r = residual_terms(eps, alpha, y2, ms, j)
    n = alpha + 1
    g = s.grid

    def gf(v):
        return GridField(g, np.broadcast_to(v, g.shape))

    a22q = r["P"]
    a12q = -eps**2 * r["R"]
    y2a0 = y2 * c["u"] + c["uq"]
    lead11 = ms.a * alpha * n
    lead22 = -ms.G211 * n * ms.a
    lead0 = -2 * ms.G211 * ms.a * alpha * n**2
    lead2 = -ms.G211 * ms.a * n * (3 * alpha + 2)
    return RawLinearization(
        eps, alpha,
        a11=gf(c["u11"]), a12=gf(c["u12"] / 2), a22=gf(c["u22"]), a1=gf(c["u1"]), a2=gf(c["u2"]),
        a0u=gf(c["u"]), a0q=gf(c["uq"]), a12_over_y2=gf(a12q), a22_over_y2=gf(a22q), y2a0=gf(y2a0),
        btilde11=gf((c["u11"] / eps**2 - lead11) / eps),
        btilde12=gf(a12q / eps**2),
        btilde22=gf((a22q - lead22) / eps),
        btilde0=gf((y2a0 - lead0) / eps),
        btilde1=gf(c["u1"] / eps**2),
        btilde2=gf((c["u2"] - lead2) / eps),
    )


@dataclass
class ReducedOperator:
    """Divided, re-coordinated operator on the (x, t) grid, t = sign * y2.

    L phi = cxx phi_xx + cxt phi_xt + ctt phi_tt + cx phi_x + ct phi_t + c0t phi / t
    with cxx = eps^2 (alpha + eps b11), cxt = eps^2 t b12, ctt = t (1 + eps b22),
    cx = eps^2 b1, ct = 3 alpha + 2 + eps b2, c0t = 2 (alpha^2 + alpha) + eps b0.
    Fields are stored in (x, t) order: for sign_branch = -1 the t axis is the
    reversed y2 axis.
    """

    grid: Grid
    epsilon: float
    alpha: int
    sign_branch: int
    x_map: XMap | None
    b11: GridField
    b12: GridField
    b22: GridField
    b0: GridField
    b1: GridField
    b2: GridField
    divisor: np.ndarray | None = None

    @property
    def t(self) -> np.ndarray:
        return self.grid.t

    def coefficients(self) -> dict:
        eps, al = self.epsilon, self.alpha
        t = self.t[None, :]
        return {
            "xx": eps**2 * (al + eps * self.b11.values),
            "xt": eps**2 * t * self.b12.values,
            "tt": t * (1 + eps * self.b22.values),
            "x": eps**2 * self.b1.values,
            "t": 3 * al + 2 + eps * self.b2.values,
            "0t": 2 * (al**2 + al) + eps * self.b0.values,
        }

    def bound(self) -> float:
        """Sup of the b-fields (the bounded-coefficient constant reported by the checks)."""
        return max(f.sup() for f in (self.b11, self.b12, self.b22, self.b0, self.b1, self.b2))

    @classmethod
    def limit(cls, grid: Grid, alpha: int, epsilon: float = 0.0) -> "ReducedOperator":
        """The operator with all b-fields zero (the eps = 0 operator when epsilon = 0)."""
        z = GridField(grid, np.zeros(grid.shape))
        return cls(grid, epsilon, alpha, 1, None, z, z, z, z, z, z)


def reduce(raw: RawLinearization, a: AnsatzCoefficient, m: GeodesicMetric, x_map: XMap,
           state: ScaledState) -> ReducedOperator:
    """Divide by the base-curve value -sign G211 a (alpha+1) = |kg| a (alpha+1) and pass to (x, t)."""
    eps, al = raw.epsilon, raw.alpha
    sig = x_map.sign
    y1 = state.y1
    D = (sig * m.kg(y1) * a(y1) * (al + 1))[:, None]
    if np.any(D <= 0):
        raise SingularityError("division field |kg| a (alpha+1) vanishes", condition="kg K0 > 0 on the base curve")
    xp, xpp, _ = (c[:, None] for c in state.chain())
    cxx = raw.a11.values * xp**2 / D
    ctt_over_t = sig * raw.a22_over_y2.values / D
    cx = (raw.a11.values * xpp + raw.a1.values * xp) / D
    ct = sig * raw.a2.values / D
    c0t = sig * raw.y2a0.values / D
    b = {
        "b11": (cxx / eps**2 - al) / eps,
        # cxt = 2 a12 sig x' / D = 2 eps^2 t (a12 / y2) x' / D
        "b12": 2 * raw.a12_over_y2.values * xp / D / eps**2,
        "b22": (ctt_over_t - 1) / eps,
        "b1": cx / eps**2,
        "b2": (ct - (3 * al + 2)) / eps,
        "b0": (c0t - 2 * (al**2 + al)) / eps,
    }
    g = state.grid
    if sig < 0:
        b = {k: v[:, ::-1] for k, v in b.items()}
    fields = {k: GridField(g, np.broadcast_to(v, g.shape).copy()) for k, v in b.items()}
    return ReducedOperator(g, eps, al, sig, x_map, divisor=D[:, 0], **fields)


def phi_over_t(grid: Grid, phi: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """phi / t with the removable singularity at t = 0 filled by d_t phi."""
    t = grid.t[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        q = phi / t
    k = grid.zero_index
    if k is not None:
        scale = max(1.0, float(np.max(np.abs(phi))))
        if np.max(np.abs(phi[:, k])) > tol * scale:
            raise SingularityError("phi / t is singular: phi does not vanish on t = 0",
                                   condition="phi(., 0) = 0", max_value=float(np.max(np.abs(phi[:, k]))))
        q[:, k] = grid.dt(phi)[:, k]
    return q


def apply_L(op: ReducedOperator, s: ScaledState | None, phi: GridField | np.ndarray) -> GridField:
    g = op.grid
    f = phi.values if isinstance(phi, GridField) else np.asarray(phi, dtype=float)
    c = op.coefficients()
    ft = g.dt(f)
    out = (c["xx"] * g.dx(f, 2) + c["xt"] * g.dx(ft) + c["tt"] * g.dt(f, 2)
           + c["x"] * g.dx(f) + c["t"] * ft + c["0t"] * phi_over_t(g, f))
    return GridField(g, out)


# ------------------------------------------------------------ discrete Jacobian

def jet_matrices(state: ScaledState) -> dict:
    """Sparse matrices mapping the flattened v (C order, shape (nx, nt)) to each jet entry."""
    g = state.grid
    nx, nt = g.shape
    It, Ix = sp.identity(nt, format="csr"), sp.identity(nx, format="csr")
    Dx1 = sp.csr_matrix(spectral_matrix(nx, 1))
    Dx2 = sp.csr_matrix(spectral_matrix(nx, 2))
    Y = sp.diags(g.t)
    Dt1, Dt2 = g.dt_matrix(1, biased=True), g.dt_matrix(2, biased=True)
    xp, xpp, _ = state.chain()
    Xp, Xpp = sp.diags(xp), sp.diags(xpp)
    kron = sp.kron
    ux = kron(Dx1, Y)
    uxx = kron(Dx2, Y)
    return {
        "uq": kron(Ix, It),
        "u": kron(Ix, Y),
        "u1": kron(Xp, It) @ ux,
        "u11": kron(Xp @ Xp, It) @ uxx + kron(Xpp, It) @ ux,
        "u2": kron(Ix, It + Y @ Dt1),
        "u22": kron(Ix, 2 * Dt1 + Y @ Dt2),
        "u12": kron(Xp, It) @ kron(Dx1, It + Y @ Dt1),
    }


def discrete_jacobian(state: ScaledState, a: AnsatzCoefficient, m: GeodesicMetric,
                      mats: dict | None = None) -> sp.csr_matrix:
    """Exact Jacobian of the discrete scaled residual with respect to v."""
    mats = mats or jet_matrices(state)
    ms = metric_samples(state, a, m)
    c = jet_partials(state.epsilon, m.alpha, state.y2[None, :], ms, jet_from_v(state, state.v))
    J = None
    for k in JET_KEYS:
        term = sp.diags(c[k].ravel()) @ mats[k]
        J = term if J is None else J + term
    return J.tocsr()
