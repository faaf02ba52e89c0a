"""Newton iteration for the scaled residual on a fixed grid.

Each correction solves the discrete linearized equation J_h dv = -F_h, where
J_h is the exact Jacobian of the discrete residual, by sparse LU.  The
symmetric positive system at the current iterate supplies the positivity
margin recorded in the log.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .assemble import SystemParams, positivity_at
from .coords import x_transform
from .darboux import ScaledState, initial_coefficient, scaled_residual
from .errors import CalibrationError, ConvergenceError
from .grid import Grid
from .linearize import discrete_jacobian, gateaux_coefficients, jet_matrices, reduce
from .metric import GeodesicMetric, factor_K0


@dataclass
class NewtonOptions:
    tol: float = 1e-8
    max_iter: int = 20
    linear_solver: str = "direct"
    smoothing: bool = False
    mode_cap: int | None = None
    budget_cap: float = 1.0
    positivity_floor: float = 0.0


@dataclass
class StepRecord:
    step: int
    res_sup: float
    res_l2: float
    step_norm: float
    margin: float
    budget: float
    accepted: bool
    note: str = ""


@dataclass
class IterationLog:
    steps: list = field(default_factory=list)
    reason: str = ""

    FIELDS = ("step", "res_sup", "res_l2", "step_norm", "margin", "budget", "accepted")

    def add(self, rec: StepRecord) -> None:
        self.steps.append(rec)

    @property
    def accepted(self) -> list:
        return [r for r in self.steps if r.accepted]

    @property
    def iterations(self) -> int:
        return sum(1 for r in self.steps if r.accepted and r.step > 0)

    def residuals(self) -> list[float]:
        return [r.res_sup for r in self.accepted]

    def is_monotone(self) -> bool:
        l2 = [r.res_l2 for r in self.accepted]
        return all(b < a for a, b in zip(l2, l2[1:]))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.FIELDS)
        for r in self.steps:
            w.writerow([r.step, repr(r.res_sup), repr(r.res_l2), repr(r.step_norm), repr(r.margin),
                        repr(r.budget), int(r.accepted)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    def to_dict(self) -> dict:
        return {"reason": self.reason, "steps": [asdict(r) for r in self.steps]}

    @classmethod
    def from_dict(cls, d: dict) -> "IterationLog":
        return cls([StepRecord(**r) for r in d["steps"]], d.get("reason", ""))


@dataclass
class NewtonContext:
    """Everything fixed during an iteration: metric, coefficient a, grid, eps."""

    metric: GeodesicMetric
    epsilon: float
    grid: Grid
    params: SystemParams
    options: NewtonOptions

    def __post_init__(self):
        self.fac = factor_K0(self.metric)
        self.ac = initial_coefficient(self.metric, self.fac)
        self.xmap = x_transform(self.metric)
        self._mats = None

    def state(self, v=None) -> ScaledState:
        g = self.grid
        return ScaledState(self.epsilon, g, np.zeros(g.shape) if v is None else v, self.xmap)

    @property
    def mats(self) -> dict:
        if self._mats is None:
            self._mats = jet_matrices(self.state())
        return self._mats

    def residual(self, s: ScaledState) -> np.ndarray:
        return scaled_residual(s, self.ac, self.metric).values.values

    def operator(self, s: ScaledState):
        return reduce(gateaux_coefficients(s, self.ac, self.metric), self.ac, self.metric, self.xmap, s)

    def margin(self, s: ScaledState) -> float:
        th, nc = positivity_at(self.operator(s), self.params)
        return min(th, nc)


def _norms(g: Grid, F: np.ndarray) -> tuple[float, float]:
    return float(np.max(np.abs(F))), float(math.sqrt(g.integrate(F**2)))


def smooth(g: Grid, f: np.ndarray, mode_cap: int | None) -> np.ndarray:
    """Fourier truncation in x at ``mode_cap`` and a [1, 2, 1] / 4 filter on interior t-nodes."""
    out = f
    if mode_cap is not None:
        fh = np.fft.rfft(out, axis=0)
        fh[mode_cap + 1:] = 0.0
        out = np.fft.irfft(fh, n=g.nx, axis=0)
    mid = out.copy()
    mid[:, 1:-1] = 0.25 * out[:, :-2] + 0.5 * out[:, 1:-1] + 0.25 * out[:, 2:]
    return mid


def newton_correction(ctx: NewtonContext, s: ScaledState, F: np.ndarray) -> tuple[np.ndarray, dict]:
    J = discrete_jacobian(s, ctx.ac, ctx.metric, ctx.mats)
    opt = ctx.options
    info: dict = {}
    if opt.linear_solver == "direct":
        dv = spla.splu(J.tocsc()).solve(-F.ravel())
    else:
        raise ValueError(f"unknown linear solver {opt.linear_solver!r}")
    info["jacobian_nnz"] = int(J.nnz)
    return dv.reshape(s.grid.shape), info


def newton_step(ctx: NewtonContext, s: ScaledState, F: np.ndarray | None = None):
    """One correction; returns (phi, new state) where phi = y2 * dv is the update of u."""
    F = ctx.residual(s) if F is None else F
    dv, _ = newton_correction(ctx, s, F)
    if ctx.options.smoothing:
        dv = smooth(ctx.grid, dv, ctx.options.mode_cap)
    phi = ctx.grid.t[None, :] * dv
    return phi, s.with_v(s.v + dv)


def run_solve(metric: GeodesicMetric, epsilon: float, grid: Grid, options: NewtonOptions | None = None,
              params: SystemParams | None = None) -> tuple[ScaledState, IterationLog]:
    """Iterate from u = 0 until sup |F| <= tol or max_iter steps."""
    options = options or NewtonOptions()
    params = params or SystemParams(metric.alpha)
    ctx = NewtonContext(metric, epsilon, grid, params, options)
    s = ctx.state()
    margin = ctx.margin(s)
    if not margin > options.positivity_floor:
        raise CalibrationError(f"eps = {epsilon} fails the positivity/noncharacteristic check (margin {margin:.3g})",
                               condition="Theta > 0 and det A(x, 2) != 0", margin=margin)
    log = IterationLog()
    F = ctx.residual(s)
    sup, l2 = _norms(grid, F)
    log.add(StepRecord(0, sup, l2, 0.0, margin, s.budget(), True))
    k = 0
    while sup > options.tol:
        if k >= options.max_iter:
            log.reason = "max_iter"
            raise ConvergenceError(f"no convergence in {options.max_iter} steps (residual {sup:.3e})",
                                   reason="stagnation", log=log)
        k += 1
        dv, _ = newton_correction(ctx, s, F)
        if options.smoothing:
            dv = smooth(grid, dv, options.mode_cap)
        accepted = False
        for scale in (1.0, 0.5):
            trial = s.with_v(s.v + scale * dv)
            Ft = ctx.residual(trial)
            tsup, tl2 = _norms(grid, Ft)
            step_norm = float(math.sqrt(grid.integrate((scale * grid.t[None, :] * dv) ** 2)))
            budget = trial.budget()
            mg = ctx.margin(trial)
            if tl2 < l2:
                accepted = True
                log.add(StepRecord(k, tsup, tl2, step_norm, mg, budget, True, "" if scale == 1 else "halved"))
                break
            log.add(StepRecord(k, tsup, tl2, step_norm, mg, budget, False))
        if not accepted:
            log.reason = "stagnation"
            raise ConvergenceError(f"residual did not decrease at step {k} even with a halved step",
                                   reason="stagnation", log=log)
        if not mg > options.positivity_floor:
            log.reason = "positivity"
            raise ConvergenceError(f"positivity lost at step {k} (margin {mg:.3g})", reason="positivity", log=log)
        if budget > options.budget_cap:
            log.reason = "budget"
            raise ConvergenceError(f"|u|_4 budget {budget:.3g} exceeds {options.budget_cap}", reason="budget",
                                   log=log)
        s, F, sup, l2 = trial, Ft, tsup, tl2
    log.reason = "converged"
    return s, log
