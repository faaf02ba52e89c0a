"""Command line interface: check, init, solve, reconstruct, verify, budget, export."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .errors import ConfigError, EmbeddingError
from .metric import factor_K0
from .darboux import initial_coefficient
from .toolchain import (RunConfig, VerificationReport, _jsonable, _stage, check_stage, load_state, regularity_budget,
                        run_pipeline, save_state, solve_stage, verify_state)


def _overrides(args) -> dict:
    o: dict = {}
    if getattr(args, "epsilon", None) is not None:
        o["epsilon"] = args.epsilon
    grid = {k: getattr(args, k) for k in ("nx", "nt") if getattr(args, k, None) is not None}
    if grid:
        o["grid"] = grid
    metric = {k: getattr(args, k) for k in ("alpha", "mu") if getattr(args, k, None) is not None}
    if metric:
        o["metric"] = metric
    if getattr(args, "no_calibrate", False):
        o["calibrate"] = False
    return o


def _config(args) -> RunConfig:
    if args.config:
        return RunConfig.load(args.config, _overrides(args))
    return RunConfig.from_dict(_overrides(args))


def _emit(obj, out) -> None:
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def cmd_check(args) -> int:
    cfg = _config(args)
    from .metric import check_alpha_surface

    rep = check_alpha_surface(cfg.build_metric())
    _emit(rep.to_dict(), args.out)
    if not rep.verdict:
        _stage("check", check_stage, cfg)  # raises the error for the first failed condition
    return 0


def cmd_init(args) -> int:
    cfg = _config(args)
    m, _ = check_stage(cfg)
    ac = initial_coefficient(m, factor_K0(m))
    x1 = np.arange(args.samples) * 2 * np.pi / args.samples
    _emit({"x1": x1.tolist(), "a": ac(x1).tolist(), "a1": ac(x1, 1).tolist(), "a2": ac(x1, 2).tolist()}, args.out)
    return 0


def cmd_solve(args) -> int:
    cfg = _config(args)
    m, _ = check_stage(cfg)
    s, log, _ = solve_stage(cfg, m)
    save_state(args.out, cfg, s, log)
    if args.log:
        log.to_csv(args.log)
    print(f"converged in {log.iterations} steps, residual {log.steps[-1].res_sup:.3e}", file=sys.stderr)
    return 0


def _surface(args):
    cfg, s, _ = load_state(args.input)
    m = cfg.build_metric()
    rep = VerificationReport({})
    surf = verify_state(cfg, m, s, rep)
    return surf, rep


def cmd_reconstruct(args) -> int:
    surf, _ = _surface(args)
    surf.to_csv(args.out)
    if args.mesh:
        surf.to_mesh(args.mesh)
    return 0


def cmd_export(args) -> int:
    if not (args.mesh or args.csv):
        raise ConfigError("export needs --mesh and/or --csv")
    surf, _ = _surface(args)
    if args.mesh:
        surf.to_mesh(args.mesh)
    if args.csv:
        surf.to_csv(args.csv)
    return 0


def cmd_verify(args) -> int:
    if args.input:
        cfg, s, log = load_state(args.input)
        m = cfg.build_metric()
        rep = VerificationReport({}, iteration=log.to_dict() if log else {})
        verify_state(cfg, m, s, rep)
    else:
        rep, _, _ = run_pipeline(_config(args))
    _emit(rep.to_dict(), args.out)
    return 0 if rep.passed else 2


def cmd_budget(args) -> int:
    b = regularity_budget(args.s_star, args.alpha)
    print(f"s in [{b.s_range[0]}, {b.s_range[1]}]  ({b.stilde_range})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="isoembed", description="Local isometric embedding near a degenerate curve")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--epsilon", type=float)
        p.add_argument("--nx", type=int)
        p.add_argument("--nt", type=int)
        p.add_argument("--alpha", type=int)
        p.add_argument("--mu", type=float)
        p.add_argument("--no-calibrate", action="store_true", help="skip the eps sweep")

    p = sub.add_parser("check", help="evaluate the alpha-surface conditions")
    common(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("init", help="emit the leading coefficient a(x1)")
    common(p)
    p.add_argument("--samples", type=int, default=64)
    p.add_argument("--out")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("solve", help="run the Newton iteration and save the state")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="iteration log CSV")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("reconstruct", help="build (p, q, z) from a saved state")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True, help="surface CSV")
    p.add_argument("--mesh")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("verify", help="full pipeline (or a saved state) with the verification report")
    common(p)
    p.add_argument("--in", dest="input")
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("budget", help="admissible smoothness range")
    p.add_argument("--s-star", type=int, required=True)
    p.add_argument("--alpha", type=int, required=True)
    p.set_defaults(func=cmd_budget)

    p = sub.add_parser("export", help="write the surface as CSV and/or a vertex/face mesh")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--mesh")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_export)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EmbeddingError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
