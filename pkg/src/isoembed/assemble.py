"""The concrete 3x3 symmetric positive system for the reduced operator.

With U = e^{gamma t} (phi_t, phi / t, eps phi_x) the equation L phi = f becomes
A U_t + B U_x + C U = (e^{gamma t} f, 0, 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CalibrationError, SingularityError
from .friedrichs import SymmetricSystem, enlarged_theta, noncharacteristic_margin
from .grid import Grid, GridField
from .linearize import ReducedOperator


@dataclass
class SystemParams:
    """beta = 2 (alpha^2 + alpha); gamma in (0, 1/4).

    The eps thresholds are filled in by calibrate_epsilons.  ``C_s`` and
    ``zeta`` name the constants of the a priori energy estimate; they are
    documented, not computed.
    """

    alpha: int
    gamma: float = 0.125
    eps1: float | None = None
    eps2: float | None = None
    eps3: float | None = None
    sweep: dict = field(default_factory=dict)
    C_s: str = "energy-estimate constant (not computed)"
    zeta: str = "1 when s >= 3 (not computed)"

    def __post_init__(self):
        if not 0 < self.gamma < 0.25:
            raise ValueError("gamma must lie in (0, 1/4)")

    @property
    def beta(self) -> float:
        return 2.0 * (self.alpha**2 + self.alpha)

    @property
    def eps0(self) -> float | None:
        vals = [e for e in (self.eps1, self.eps2, self.eps3) if e is not None]
        return min(vals) if vals else None


def build_system(op: ReducedOperator, s, p: SystemParams, f: GridField | np.ndarray | None = None) -> SymmetricSystem:
    g = op.grid
    eps, al, beta, gam = op.epsilon, op.alpha, p.beta, p.gamma
    t = np.broadcast_to(g.t[None, :], g.shape)
    Z = np.zeros(g.shape)
    b11, b12, b22, b0, b1, b2 = (getattr(op, k).values for k in ("b11", "b12", "b22", "b0", "b1", "b2"))
    a_eff = al + eps * b11
    A = np.array([[t * (1 + eps * b22), Z, Z],
                  [Z, beta * t, Z],
                  [Z, Z, -a_eff]])
    B = np.array([[eps**2 * b12 * t, Z, eps * a_eff],
                  [Z, Z, Z],
                  [eps * a_eff, Z, Z]])
    C = np.array([[3 * al + 2 - gam * t + eps * b2 - eps * gam * t * b22, 2 * (al**2 + al) + eps * b0, eps * b1],
                  [-beta + Z, beta * (1 - gam * t), Z],
                  [Z, Z, gam * a_eff]])
    fv = np.zeros(g.shape) if f is None else (f.values if isinstance(f, GridField) else np.asarray(f, dtype=float))
    F = np.array([np.exp(gam * t) * fv, Z, Z])
    return SymmetricSystem(g, A, B, C, F, boundary_rows=(1, 2), meta={"epsilon": eps, "alpha": al})


def lift_phi(phi: GridField | np.ndarray, s, p: SystemParams, epsilon: float, tol: float = 1e-10) -> GridField:
    """U = e^{gamma t} (phi_t, phi / t, eps phi_x); on t = 0, u2 := u1."""
    f = phi.values if isinstance(phi, GridField) else np.asarray(phi, dtype=float)
    g = phi.grid if isinstance(phi, GridField) else s
    t = g.t[None, :]
    ft = g.dt(f)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = f / t
    k = g.zero_index
    if k is not None:
        if np.max(np.abs(f[:, k])) > tol * max(1.0, float(np.max(np.abs(f)))):
            raise SingularityError("cannot lift phi: phi does not vanish on t = 0", condition="phi(., 0) = 0")
        q[:, k] = ft[:, k]
    e = np.exp(p.gamma * t)
    U = np.array([e * ft, e * q, e * epsilon * g.dx(f)])
    return GridField(g, U)


@dataclass
class Lowered:
    phi: GridField
    consistency_residual: float
    flagged: bool


def lower_U(U: GridField, s, p: SystemParams, tol: float = 1e-3) -> Lowered:
    """phi = t e^{-gamma t} u2, with ||phi_t - e^{-gamma t} u1|| / ||u1|| as the consistency check."""
    g = U.grid
    t = g.t[None, :]
    e = np.exp(-p.gamma * t)
    phi = t * e * U.values[1]
    res = float(np.sqrt(g.integrate((g.dt(phi) - e * U.values[0]) ** 2)))
    scale = float(np.sqrt(g.integrate(U.values[0] ** 2)))
    rel = res / scale if scale > 0 else res
    return Lowered(GridField(g, phi), rel, rel > tol)


def positivity_at(op: ReducedOperator, p: SystemParams) -> tuple[float, float]:
    sys = build_system(op, None, p)
    rep = enlarged_theta(sys, 0)
    return rep.theta_min_eig, noncharacteristic_margin(sys)


def calibrate_epsilons(op_factory, p: SystemParams, converges=None, sweep=(0.2, 0.1, 0.05, 0.025, 0.0125)) -> SystemParams:
    """Largest eps in a dyadic sweep passing each check.

    ``op_factory(eps)`` returns the reduced operator at eps; ``converges(eps)``
    (optional) runs the nonlinear iteration and returns True on success.
    """
    record = {}
    e1 = e2 = e3 = None
    for eps in sweep:
        th, nc = positivity_at(op_factory(eps), p)
        record[eps] = {"theta_min_eig": th, "noncharacteristic_margin": nc}
        if e1 is None and th > 0:
            e1 = eps
        if e2 is None and nc > 0:
            e2 = eps
        if e1 is not None and e2 is not None:
            break
    if e1 is None:
        raise CalibrationError("no eps in the sweep gives positive Theta", condition="Theta > 0 (positivity)",
                               sweep=record)
    if e2 is None:
        raise CalibrationError("no eps in the sweep keeps t = tmax noncharacteristic",
                               condition="det A(x, 2) != 0", sweep=record)
    if converges is not None:
        for eps in sweep:
            if eps > min(e1, e2):
                continue
            ok = bool(converges(eps))
            record.setdefault(eps, {})["converged"] = ok
            if ok:
                e3 = eps
                break
        if e3 is None:
            raise CalibrationError("the nonlinear iteration failed for every eps in the sweep",
                                   condition="Newton iteration converges", sweep=record)
    return replace(p, eps1=e1, eps2=e2, eps3=e3, sweep=record)
