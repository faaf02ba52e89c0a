"""Run configuration, the end-to-end pipeline, verification report and regularity budget."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .assemble import SystemParams, calibrate_epsilons
from .coords import x_transform
from .darboux import ScaledState, initial_coefficient, unscaled_darboux, z_grid_jet
from .errors import CalibrationError, ConfigError, EmbeddingError, InsufficientRegularityError
from .grid import Grid
from .iterate import IterationLog, NewtonContext, NewtonOptions, run_solve
from .linearize import gateaux_coefficients, reduce
from .metric import GeodesicMetric, check_alpha_surface, factor_K0, flat_annulus, kg_family
from .reconstruct import (assemble_embedding, curvature_comparison, developing_map, flat_metric,
                          pullback_residual)

DEFAULTS = {
    "metric": {"family": "TF", "alpha": 1, "mu": 4.0, "k0": 1.0, "c": 0.0, "mode": 1},
    "epsilon": 0.05,
    "grid": {"nx": 64, "nt": 65},
    "gamma": 0.125,
    "newton": {"max_iter": 20, "tol": 1e-8, "smoothing": False, "mode_cap": None, "budget_cap": 1.0},
    "tolerances": {"flatness": 1e-5, "defects": 1e-6, "positivity_floor": 0.0, "pullback": 1e-4},
    "calibrate": True,
    "output": {"dir": "."},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass
class RunConfig:
    metric: dict
    epsilon: float
    grid: dict
    gamma: float
    newton: dict
    tolerances: dict
    calibrate: bool = True
    output: dict = field(default_factory=lambda: {"dir": "."})

    def __post_init__(self):
        nx, nt = self.grid.get("nx"), self.grid.get("nt")
        if not isinstance(nx, int) or nx < 16 or nx & (nx - 1):
            raise ConfigError(f"grid.nx must be a power of two >= 16, got {nx!r}")
        if not isinstance(nt, int) or nt < 17 or nt % 2 == 0:
            raise ConfigError(f"grid.nt must be odd and >= 17, got {nt!r}")
        if not 0 < float(self.epsilon) < 1:
            raise ConfigError(f"epsilon must lie in (0, 1), got {self.epsilon!r}")
        if not 0 < float(self.gamma) < 0.25:
            raise ConfigError(f"gamma must lie in (0, 1/4), got {self.gamma!r}")
        if self.metric.get("family") not in ("TF", "kg", "flat", "custom"):
            raise ConfigError(f"unknown metric family {self.metric.get('family')!r}")
        unknown = set(self.newton) - {f for f in NewtonOptions.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown newton options {sorted(unknown)}")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = set(d) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        full = _merge(DEFAULTS, d)
        try:
            return cls(**full)
        except TypeError as e:
            raise ConfigError(str(e)) from e

    @classmethod
    def load(cls, path, overrides: dict | None = None) -> "RunConfig":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        return cls.from_dict(_merge(d, overrides or {}))

    def to_dict(self) -> dict:
        return asdict(self)

    def build_metric(self) -> GeodesicMetric:
        m = self.metric
        fam = m.get("family")
        al = int(m.get("alpha", 1))
        if fam == "TF":
            return kg_family(al, float(m.get("mu", 4.0)))
        if fam == "kg":
            return kg_family(al, float(m.get("mu", 4.0)), float(m.get("k0", 1.0)), float(m.get("c", 0.0)),
                             int(m.get("mode", 1)))
        if fam == "flat":
            return flat_annulus(al, float(m.get("k0", 1.0)), float(m.get("c", 0.0)), int(m.get("mode", 1)))
        try:
            return GeodesicMetric.from_dict({"alpha": al, **m})
        except (KeyError, ValueError) as e:
            raise ConfigError(f"bad custom metric: {e}") from e

    def build_grid(self) -> Grid:
        return Grid(int(self.grid["nx"]), int(self.grid["nt"]))

    def newton_options(self) -> NewtonOptions:
        opts = dict(self.newton)
        opts.setdefault("positivity_floor", self.tolerances.get("positivity_floor", 0.0))
        return NewtonOptions(**opts)

    def params(self) -> SystemParams:
        return SystemParams(int(self.metric.get("alpha", 1)), float(self.gamma))


# ------------------------------------------------------------ budget

@dataclass
class RegularityBudget:
    s_star: int
    alpha: int
    s_range: tuple
    stilde_star: int
    stilde_range: str

    def to_dict(self) -> dict:
        return asdict(self)


def regularity_budget(s_star: int, alpha: int) -> RegularityBudget:
    """Admissible smoothness s of the embedding for a C^{s*} metric: 4 <= s <= 4/7 (s* - 2 alpha) - 4."""
    if int(s_star) != s_star or int(alpha) != alpha or alpha < 1:
        raise ValueError("s_star and alpha must be integers with alpha >= 1")
    s_star, alpha = int(s_star), int(alpha)
    if s_star < 2 * alpha + 31:
        raise InsufficientRegularityError(
            f"s* = {s_star} is below the threshold s* >= 2 alpha + 31 = {2 * alpha + 31}",
            s_star=s_star, alpha=alpha)
    # floor(4/7 (s* - 2 alpha) - 4) in exact integer arithmetic
    hi = (4 * (s_star - 2 * alpha) - 28) // 7
    st = s_star - 2 * alpha - 3
    return RegularityBudget(s_star, alpha, (4, hi), st, f"6 <= s~ < 4/7 * {st} = {4 * st / 7:.4g}")


# ------------------------------------------------------------ pipeline

@dataclass
class VerificationReport:
    alpha_surface: dict
    a_stats: dict = field(default_factory=dict)
    positivity: dict = field(default_factory=dict)
    calibration: dict = field(default_factory=dict)
    iteration: dict = field(default_factory=dict)
    flatness_residual: float | None = None
    darboux_unscaled: float | None = None
    gradient_max: float | None = None
    pullback_residual: float | None = None
    periodicity_defects: dict = field(default_factory=dict)
    turning_number: float | None = None
    curvature_comparison: float | None = None
    checks: dict = field(default_factory=dict)
    stage_reached: str = ""

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(self.checks.values())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), indent=2, sort_keys=True)


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, float) and not math.isfinite(o):
        return repr(o)
    return o


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except EmbeddingError as e:
        if e.stage is None:
            e.stage = name
        raise


def check_stage(cfg: RunConfig) -> tuple[GeodesicMetric, dict]:
    m = cfg.build_metric()
    rep = check_alpha_surface(m)
    if not rep.verdict:
        from .errors import ClosureError, PreconditionError, TurningNumberError

        if not rep.cond_total_turning.passed:
            raise TurningNumberError(f"integral of kg is {rep.cond_total_turning.value:.12g}, not 2 pi",
                                     report=rep.to_dict())
        if not rep.cond_closure.passed:
            raise ClosureError(f"|closure integral| = {abs(rep.cond_closure.value):.10g}", report=rep.to_dict())
        raise PreconditionError("sign condition violated", report=rep.to_dict())
    factor_K0(m)
    return m, rep.to_dict()


def solve_stage(cfg: RunConfig, m: GeodesicMetric | None = None):
    """Calibrate (optionally) and run the Newton iteration; returns (state, log, calibration dict)."""
    m = m or cfg.build_metric()
    g = cfg.build_grid()
    p = cfg.params()
    opts = cfg.newton_options()
    calib: dict = {}
    if cfg.calibrate:
        ac = initial_coefficient(m, factor_K0(m))
        xm = x_transform(m)

        def op_factory(eps):
            s = ScaledState(eps, g, np.zeros(g.shape), xm)
            return reduce(gateaux_coefficients(s, ac, m), ac, m, xm, s)

        def converges(eps):
            try:
                run_solve(m, eps, g, opts, p)
                return True
            except EmbeddingError:
                return False

        p = _stage("calibrate", calibrate_epsilons, op_factory, p, converges)
        calib = {"eps1": p.eps1, "eps2": p.eps2, "eps3": p.eps3, "eps0": p.eps0,
                 "sweep": {repr(k): v for k, v in p.sweep.items()}}
        if cfg.epsilon > p.eps0:
            raise CalibrationError(f"eps = {cfg.epsilon} exceeds the calibrated eps0 = {p.eps0}",
                                   condition="eps <= eps0", stage="calibrate")
    s, log = _stage("solve", run_solve, m, float(cfg.epsilon), g, opts, p)
    return s, log, calib


def verify_state(cfg: RunConfig, m: GeodesicMetric, s: ScaledState, report: VerificationReport):
    ac = initial_coefficient(m, factor_K0(m))
    tol = cfg.tolerances
    h = _stage("reconstruct", flat_metric, s, ac, m)
    report.flatness_residual = h.flatness_residual
    zj = z_grid_jet(s, ac, 2)
    X1 = np.broadcast_to(s.y1[:, None], s.grid.shape)
    X2 = np.broadcast_to(s.x2[None, :], s.grid.shape)
    report.darboux_unscaled = float(np.max(np.abs(unscaled_darboux(zj, m, X1, X2))))
    report.gradient_max = float(np.max(zj["z1"] ** 2 / m.B(X1, X2) ** 2 + zj["z2"] ** 2))
    dm = _stage("reconstruct", developing_map, h, tol["flatness"], tol["defects"])
    surf = assemble_embedding(dm, s, ac, h)
    report.turning_number = dm.turning_number
    report.periodicity_defects = dict(dm.defects)
    report.pullback_residual = pullback_residual(surf, m)
    report.curvature_comparison = curvature_comparison(surf, m)
    report.checks.update({
        "flatness": report.flatness_residual <= tol["flatness"],
        "defects": max(dm.defects.values()) <= tol["defects"],
        "pullback": report.pullback_residual <= tol["pullback"],
        "gradient_bound": report.gradient_max < 1.0,
        "turning_number": round(dm.turning_number) == 1,
    })
    report.stage_reached = "verify"
    return surf


def run_pipeline(cfg: RunConfig) -> tuple[VerificationReport, ScaledState, object]:
    """check -> init -> calibrate -> solve -> reconstruct -> verify."""
    m, surf_rep = _stage("check", check_stage, cfg)
    report = VerificationReport(surf_rep, stage_reached="check")
    ac = _stage("init", initial_coefficient, m, factor_K0(m))
    xs = np.arange(256) * 2 * np.pi / 256
    av = ac(xs)
    report.a_stats = {"min": float(av.min()), "max": float(av.max()), "mean": float(av.mean())}
    s, log, calib = solve_stage(cfg, m)
    # strip half-width used by the run, and the two readings of the threshold-based width
    calib = {**calib, "delta": s.delta}
    if calib.get("eps0") is not None:
        calib["delta_2eps0"] = 2 * calib["eps0"]
        calib["delta_2eps0_sq"] = 2 * calib["eps0"] ** 2
    report.calibration = calib
    report.iteration = log.to_dict()
    ctx = NewtonContext(m, s.epsilon, s.grid, cfg.params(), cfg.newton_options())
    op = ctx.operator(s)
    from .assemble import positivity_at

    th, nc = positivity_at(op, cfg.params())
    report.positivity = {"theta_min_eig": th, "noncharacteristic_margin": nc, "b_bound": op.bound()}
    report.checks["converged"] = log.reason == "converged"
    report.checks["monotone"] = log.is_monotone()
    surf = verify_state(cfg, m, s, report)
    return report, s, surf


# ------------------------------------------------------------ state files

def save_state(path, cfg: RunConfig, s: ScaledState, log: IterationLog | None = None) -> None:
    d = {"config": cfg.to_dict(), "epsilon": s.epsilon, "grid": {"nx": s.grid.nx, "nt": s.grid.nt},
         "v": s.v.tolist(), "log": log.to_dict() if log else None}
    Path(path).write_text(json.dumps(_jsonable(d), sort_keys=True), encoding="utf-8")


def load_state(path) -> tuple[RunConfig, ScaledState, IterationLog | None]:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read state {path}: {e}") from e
    cfg = RunConfig.from_dict(d["config"])
    m = cfg.build_metric()
    g = Grid(int(d["grid"]["nx"]), int(d["grid"]["nt"]))
    s = ScaledState(float(d["epsilon"]), g, np.array(d["v"], dtype=float), x_transform(m))
    log = IterationLog.from_dict(d["log"]) if d.get("log") else None
    return cfg, s, log
