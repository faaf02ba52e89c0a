import numpy as np
import pytest

from isoembed.assemble import SystemParams, build_system, calibrate_epsilons, lift_phi, lower_U, positivity_at
from isoembed.darboux import ScaledState, initial_coefficient
from isoembed.errors import CalibrationError, ConvergenceError, SingularityError
from isoembed.grid import Grid, GridField
from isoembed.iterate import IterationLog, NewtonContext, NewtonOptions, StepRecord, run_solve, smooth
from isoembed.linearize import ReducedOperator, gateaux_coefficients, reduce
from isoembed.metric import kg_family
from isoembed.metric import test_family as tf_metric


def test_params_validate_gamma():
    with pytest.raises(ValueError):
        SystemParams(1, gamma=0.3)
    p = SystemParams(2)
    assert p.beta == 12.0 and p.eps0 is None


def test_build_system_forcing_weight():
    g = Grid(16, 17)
    p = SystemParams(1)
    f = np.ones(g.shape)
    sys = build_system(ReducedOperator.limit(g, 1), None, p, f)
    np.testing.assert_allclose(sys.F[0], np.exp(p.gamma * g.t)[None, :] * f)
    assert np.all(sys.F[1:] == 0)


def test_lift_lower_round_trip():
    g = Grid(32, 65)
    X, T = g.mesh
    p = SystemParams(1)
    phi = T * (2 - T) * np.sin(X)
    U = lift_phi(GridField(g, phi), g, p, 0.05)
    low = lower_U(U, g, p)
    np.testing.assert_allclose(low.phi.values, phi, atol=1e-12)
    assert not low.flagged and low.consistency_residual < 1e-6


def test_lower_flags_inconsistent_U():
    g = Grid(16, 33)
    X, T = g.mesh
    U = GridField(g, np.array([np.cos(X) + 0 * T, np.sin(X) + 0 * T, 0 * X]))
    assert lower_U(U, g, SystemParams(1)).flagged


def test_lift_requires_vanishing_on_axis():
    g = Grid(16, 17)
    with pytest.raises(SingularityError):
        lift_phi(np.ones(g.shape), g, SystemParams(1), 0.05)


def _op_factory(m, g):
    ac = initial_coefficient(m)

    def make(eps):
        s = ScaledState.zero(eps, g, m)
        return reduce(gateaux_coefficients(s, ac, m), ac, m, s.xmap, s)

    return make


def test_calibration_tf():
    p = calibrate_epsilons(_op_factory(tf_metric(1, 4.0), Grid(16, 17)), SystemParams(1))
    assert p.eps1 == 0.2 and p.eps2 == 0.2 and p.eps3 is None and p.eps0 == 0.2


def test_calibration_records_failed_convergence():
    p = calibrate_epsilons(_op_factory(tf_metric(1, 4.0), Grid(16, 17)), SystemParams(1),
                           converges=lambda e: e <= 0.05)
    assert p.eps3 == 0.05
    assert p.sweep[0.2]["converged"] is False


def test_calibration_fails_when_nothing_converges():
    with pytest.raises(CalibrationError):
        calibrate_epsilons(_op_factory(tf_metric(1, 4.0), Grid(16, 17)), SystemParams(1), converges=lambda e: False)


def test_positivity_limit_values():
    th, nc = positivity_at(ReducedOperator.limit(Grid(16, 17), 1), SystemParams(1))
    assert th == pytest.approx(0.25, abs=1e-12)
    assert nc == pytest.approx(16.0, abs=1e-12)


# ----------------------------------------------------------------- Newton

def test_newton_quadratic_convergence(tf14_solution):
    _, log, _ = tf14_solution
    r = log.residuals()
    assert log.reason == "converged"
    # e_{k+1} <= C e_k^2 with a modest C
    assert r[2] <= 10 * r[1] ** 2 / r[0]


def test_newton_on_alpha2():
    s, log = run_solve(tf_metric(2, 6.0), 0.05, Grid(32, 33))
    assert log.reason == "converged" and log.residuals()[-1] <= 1e-8


def test_newton_on_nonconstant_kg():
    """kg = 1 + 0.3 cos 2x: converges; |u|_4 exceeds 1 from the x-derivatives of a(x1), so the cap is lifted."""
    s, log = run_solve(kg_family(1, 4.0, c=0.3, mode=2), 0.05, Grid(32, 33), NewtonOptions(budget_cap=1e3))
    assert log.residuals()[-1] <= 1e-8


def test_budget_cap_enforced():
    with pytest.raises(ConvergenceError) as ei:
        run_solve(kg_family(1, 4.0, c=0.3, mode=2), 0.05, Grid(32, 33), NewtonOptions(budget_cap=1e-6))
    assert ei.value.details["reason"] == "budget"


def test_max_iter_enforced():
    with pytest.raises(ConvergenceError) as ei:
        run_solve(tf_metric(1, 4.0), 0.05, Grid(32, 33), NewtonOptions(max_iter=1, tol=1e-14))
    assert ei.value.details["log"].reason == "max_iter"


def test_positivity_floor_blocks_start():
    with pytest.raises(CalibrationError):
        run_solve(tf_metric(1, 4.0), 0.05, Grid(16, 17), NewtonOptions(positivity_floor=1.0))


def test_smoothing_preserves_low_modes():
    g = Grid(32, 33)
    X, T = g.mesh
    f = np.cos(X) + 0 * T
    np.testing.assert_allclose(smooth(g, f + np.cos(15 * X), 4), f, atol=1e-12)


def test_log_round_trip(tmp_path, tf14_solution):
    _, log, _ = tf14_solution
    back = IterationLog.from_dict(log.to_dict())
    assert back.to_csv() == log.to_csv()
    path = tmp_path / "log.csv"
    log.to_csv(path)
    assert path.read_text().splitlines()[0] == "step,res_sup,res_l2,step_norm,margin,budget,accepted"


def test_log_monotonicity_flag():
    log = IterationLog()
    for k, r in enumerate((1.0, 0.5, 0.6)):
        log.add(StepRecord(k, r, r, 0.0, 1.0, 0.0, True))
    assert not log.is_monotone()


def test_context_margin_matches_positivity(tf14):
    ctx = NewtonContext(tf14, 0.05, Grid(16, 17), SystemParams(1), NewtonOptions())
    s = ctx.state()
    th, nc = positivity_at(ctx.operator(s), ctx.params)
    assert ctx.margin(s) == min(th, nc)
