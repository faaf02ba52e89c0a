import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from isoembed.cli import main
from isoembed.errors import ConfigError, EmbeddingError, InsufficientRegularityError
from isoembed.toolchain import RunConfig, load_state, regularity_budget, run_pipeline, save_state, solve_stage

FAST = {"grid": {"nx": 32, "nt": 33}, "calibrate": False}


# ---------------------------------------------------------------- budget

@given(s_star=st.integers(33, 400), alpha=st.integers(1, 10))
def test_budget_upper_end_is_floor(s_star, alpha):
    if s_star < 2 * alpha + 31:
        with pytest.raises(InsufficientRegularityError):
            regularity_budget(s_star, alpha)
        return
    b = regularity_budget(s_star, alpha)
    lo, hi = b.s_range
    assert lo == 4
    # hi is the largest integer with 7 (hi + 4) <= 4 (s* - 2 alpha)
    assert 7 * (hi + 4) <= 4 * (s_star - 2 * alpha) < 7 * (hi + 5)
    assert hi >= 4


def test_budget_threshold_alpha2():
    assert regularity_budget(35, 2).s_range == (4, 13)
    with pytest.raises(InsufficientRegularityError):
        regularity_budget(34, 2)


def test_budget_rejects_non_integers():
    with pytest.raises(ValueError):
        regularity_budget(33.5, 1)


# ---------------------------------------------------------------- config

@pytest.mark.parametrize("bad", [
    {"grid": {"nx": 48, "nt": 33}},
    {"grid": {"nx": 8, "nt": 33}},
    {"grid": {"nx": 32, "nt": 32}},
    {"gamma": 0.3},
    {"epsilon": 0.0},
    {"metric": {"family": "sphere"}},
    {"newton": {"bogus": 1}},
    {"unknown_key": 1},
])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(bad)


def test_config_defaults_and_load(tmp_path):
    p = tmp_path / "run.json"
    p.write_text(json.dumps({"epsilon": 0.025, "metric": {"mu": 2.0}}))
    cfg = RunConfig.load(p, {"grid": {"nx": 32}})
    assert cfg.epsilon == 0.025 and cfg.metric["mu"] == 2.0 and cfg.metric["alpha"] == 1
    assert cfg.grid == {"nx": 32, "nt": 65}
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "missing.json")


def test_custom_metric_round_trip():
    from isoembed.metric import kg_family

    m = kg_family(1, 4.0, c=0.1)
    cfg = RunConfig.from_dict({"metric": {"family": "custom", **m.to_dict()}})
    assert cfg.build_metric().to_dict() == m.to_dict()


# ---------------------------------------------------------------- pipeline

def test_pipeline_report_and_determinism():
    cfg = RunConfig.from_dict(FAST)
    a, _, _ = run_pipeline(cfg)
    b, _, _ = run_pipeline(cfg)
    assert a.passed
    assert a.to_json() == b.to_json()
    d = json.loads(a.to_json())
    for key in ("alpha_surface", "positivity", "iteration", "flatness_residual", "pullback_residual",
                "periodicity_defects", "turning_number", "curvature_comparison", "checks"):
        assert key in d
    assert d["stage_reached"] == "verify"


def test_pipeline_with_calibration():
    rep, _, _ = run_pipeline(RunConfig.from_dict({"grid": {"nx": 32, "nt": 33}}))
    assert rep.calibration["eps0"] == 0.2
    assert rep.calibration["delta"] == pytest.approx(2 * 0.05**2)
    assert rep.calibration["delta_2eps0_sq"] == pytest.approx(2 * 0.2**2)


def test_pipeline_stage_tag_on_failure():
    cfg = RunConfig.from_dict({**FAST, "metric": {"family": "kg", "k0": 0.9}})
    with pytest.raises(EmbeddingError) as ei:
        run_pipeline(cfg)
    assert ei.value.stage == "check"


def test_epsilon_above_calibrated_threshold_refused():
    cfg = RunConfig.from_dict({"grid": {"nx": 32, "nt": 33}, "epsilon": 0.3})
    with pytest.raises(EmbeddingError) as ei:
        solve_stage(cfg)
    assert ei.value.stage == "calibrate"


def test_state_round_trip(tmp_path):
    cfg = RunConfig.from_dict(FAST)
    s, log, _ = solve_stage(cfg)
    save_state(tmp_path / "st.json", cfg, s, log)
    cfg2, s2, log2 = load_state(tmp_path / "st.json")
    assert (s2.v == s.v).all() and s2.epsilon == s.epsilon
    assert log2.to_csv() == log.to_csv()


# ---------------------------------------------------------------- CLI

def test_cli_budget(capsys):
    assert main(["budget", "--s-star", "33", "--alpha", "1"]) == 0
    assert "s in [4, 13]" in capsys.readouterr().out
    assert main(["budget", "--s-star", "32", "--alpha", "1"]) == 2
    assert "s* >= 2 alpha + 31" in capsys.readouterr().err


def test_cli_check_exit_codes(tmp_path, capsys):
    assert main(["check"]) == 0
    assert json.loads(capsys.readouterr().out)["verdict"] is True
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"metric": {"family": "kg", "c": 0.3}}))
    assert main(["check", "--config", str(cfg)]) == 2
    assert main(["check", "--nx", "20"]) == 4


def test_cli_solve_reconstruct_export_verify(tmp_path):
    st_path = tmp_path / "state.json"
    assert main(["solve", "--nx", "32", "--nt", "33", "--no-calibrate", "--out", str(st_path),
                 "--log", str(tmp_path / "log.csv")]) == 0
    assert main(["reconstruct", "--in", str(st_path), "--out", str(tmp_path / "s.csv"),
                 "--mesh", str(tmp_path / "s.obj")]) == 0
    assert (tmp_path / "s.obj").read_text().startswith("v ")
    assert main(["export", "--in", str(st_path)]) == 4
    assert main(["export", "--in", str(st_path), "--csv", str(tmp_path / "e.csv")]) == 0
    assert main(["verify", "--in", str(st_path), "--out", str(tmp_path / "r.json")]) == 0
    assert json.loads((tmp_path / "r.json").read_text())["passed"] is True


def test_cli_init(tmp_path):
    out = tmp_path / "a.json"
    assert main(["init", "--alpha", "2", "--mu", "6", "--samples", "8", "--out", str(out)]) == 0
    d = json.loads(out.read_text())
    # a^2 = mu / (alpha (alpha + 1)^2) = 6 / 18
    assert d["a"] == pytest.approx([(6 / 18) ** 0.5] * 8)


def test_cli_solve_failure_exit_code(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({**FAST, "newton": {"max_iter": 1, "tol": 1e-15}}))
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "s.json")]) == 3
