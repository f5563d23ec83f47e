"""Command line front end.

Configs are strict JSON: unknown keys anywhere are an error, so a typo like
"ampliutde" cannot silently fall back to a default. A file whose top level
holds a "config" key is treated as a run manifest (the file `simulate`
writes next to its outputs) and the embedded config is used, which makes
re-running a manifest reproduce the original series byte for byte.

Exit codes: 0 success, 1 a verification suite failed, 2 bad usage or config,
3 numerical failure (step rejection, solver breakdown, non-convergence).
"""

import argparse
import copy
import itertools
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .diagnostics import (audit_ckp, audit_degenerate_coupling, dense_oracle,
                          fit_rate, record, write_series_csv)
from .errors import (LinearSolverError, MonotoneConvergenceError,
                     OracleFailure, StepFailure)
from .grid import build_interval, build_periodic_strip, build_polar_disk
from .model import (ModelParams, State, ckp_constant, mass,
                    solve_equilibrium)
from .monotone import (DEFAULT_K_MAX, DEFAULT_OUTER_TOL, check_sandwich,
                       comparison_experiment, run_monotone)
from .stepper import StepConfig, integrate

__all__ = ["main", "load_config", "build_geometry", "build_params",
           "build_initial_state", "build_step_config"]


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _check_keys(section: dict, where: str, required: tuple, optional: tuple = ()):
    if not isinstance(section, dict):
        raise ValueError(f"{where} must be a JSON object")
    unknown = set(section) - set(required) - set(optional)
    if unknown:
        raise ValueError(
            f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")
    missing = set(required) - set(section)
    if missing:
        raise ValueError(
            f"missing key(s) in {where}: {', '.join(sorted(missing))}")


def load_config(path) -> dict:
    """Load a config file, unwrapping a manifest if given one."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: top level must be a JSON object")
    if "config" in data:
        data = data["config"]
        if not isinstance(data, dict):
            raise ValueError(f"{path}: manifest 'config' must be an object")
    return data


def validate_config(cfg: dict):
    _check_keys(cfg, "config", ("geometry", "params", "initial", "step", "t_end"),
                ("out", "seed"))
    geo = cfg["geometry"]
    _check_keys(geo, "geometry", ("kind",), (
        "n_cells", "length", "nx", "ny", "width", "height",
        "nr", "ntheta", "radius"))
    kind = geo["kind"]
    dims = {"interval": ("n_cells", "length"),
            "strip": ("nx", "ny", "width", "height"),
            "disk": ("nr", "ntheta", "radius")}
    if kind not in dims:
        raise ValueError(f"geometry.kind must be one of {sorted(dims)}, "
                         f"got {kind!r}")
    _check_keys(geo, f"geometry ({kind})", ("kind",) + dims[kind])

    _check_keys(cfg["params"], "params", ("alpha", "beta", "delta_u"),
                ("delta_v", "k_u", "k_v"))

    ini = cfg["initial"]
    _check_keys(ini, "initial", ("kind", "u0", "v0"), ("amplitude",))
    if ini["kind"] not in ("constant", "step", "cosine"):
        raise ValueError("initial.kind must be one of ['constant', 'cosine', "
                         f"'step'], got {ini['kind']!r}")
    if ini["kind"] == "constant" and "amplitude" in ini:
        raise ValueError("initial.amplitude is not accepted for kind 'constant'")
    if ini["kind"] != "constant" and "amplitude" not in ini:
        raise ValueError(f"initial.amplitude is required for kind {ini['kind']!r}")

    _check_keys(cfg["step"], "step", ("dt",),
                ("newton_tol", "newton_max_iter", "linear_tol"))
    t_end = cfg["t_end"]
    if not isinstance(t_end, (int, float)) or not t_end >= 0:
        raise ValueError(f"t_end must be a nonnegative number, got {t_end!r}")


def build_geometry(geo: dict):
    kind = geo["kind"]
    if kind == "interval":
        return build_interval(int(geo["n_cells"]), float(geo["length"]))
    if kind == "strip":
        return build_periodic_strip(int(geo["nx"]), int(geo["ny"]),
                                    float(geo["width"]), float(geo["height"]))
    return build_polar_disk(int(geo["nr"]), int(geo["ntheta"]),
                            float(geo["radius"]))


def build_params(sec: dict) -> ModelParams:
    return ModelParams(alpha=float(sec["alpha"]), beta=float(sec["beta"]),
                       delta_u=float(sec["delta_u"]),
                       delta_v=float(sec.get("delta_v", 0.0)),
                       k_u=float(sec.get("k_u", 1.0)),
                       k_v=float(sec.get("k_v", 1.0)))


def build_initial_state(ini: dict, geom) -> State:
    """Constant, half-domain step, or cosine profile along the unit
    coordinate of each component. Nonnegativity is enforced by State."""
    u0 = float(ini["u0"])
    v0 = float(ini["v0"])
    kind = ini["kind"]
    if kind == "constant":
        u = np.full(geom.n_omega, u0)
        v = np.full(geom.n_gamma, v0)
    elif kind == "step":
        amp = float(ini["amplitude"])
        u = np.where(geom.omega_unit_coord < 0.5, u0 + amp, u0 - amp)
        v = np.where(geom.gamma_unit_coord < 0.5, v0 + amp, v0 - amp)
    else:
        amp = float(ini["amplitude"])
        u = u0 + amp * np.cos(2.0 * np.pi * geom.omega_unit_coord)
        v = v0 + amp * np.cos(2.0 * np.pi * geom.gamma_unit_coord)
    return State(u=u, v=v, time=0.0)


def build_step_config(sec: dict) -> StepConfig:
    kwargs = {"dt": float(sec["dt"])}
    if "newton_tol" in sec:
        kwargs["newton_tol"] = float(sec["newton_tol"])
    if "newton_max_iter" in sec:
        kwargs["newton_max_iter"] = int(sec["newton_max_iter"])
    if "linear_tol" in sec:
        kwargs["linear_tol"] = float(sec["linear_tol"])
    return StepConfig(**kwargs)


def _setup(cfg: dict, args=None):
    """Apply command-line overrides, validate, build everything. Returns the
    effective config first so manifests echo exactly what ran."""
    if args is not None:
        if getattr(args, "t_end", None) is not None:
            cfg = dict(cfg, t_end=args.t_end)
        if getattr(args, "seed", None) is not None:
            cfg = dict(cfg, seed=args.seed)
    validate_config(cfg)
    geom = build_geometry(cfg["geometry"])
    params = build_params(cfg["params"])
    state0 = build_initial_state(cfg["initial"], geom)
    step_cfg = build_step_config(cfg["step"])
    return cfg, geom, params, state0, step_cfg, float(cfg["t_end"])


def _config_path(args) -> str:
    if args.config is not None and args.config_flag is not None:
        raise ValueError("give the config either positionally or via --config, "
                         "not both")
    path = args.config if args.config is not None else args.config_flag
    if path is None:
        raise ValueError("no config file given")
    return path


def _out_dir(args, cfg) -> str:
    out = args.out if args.out is not None else cfg.get("out", ".")
    os.makedirs(out, exist_ok=True)
    return out


def write_state_csv(state: State, geom, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("field,index,coord,value\n")
        for i, (c, x) in enumerate(zip(geom.omega_unit_coord, state.u)):
            fh.write(f"u,{i},{_fmt(c)},{_fmt(x)}\n")
        for j, (c, x) in enumerate(zip(geom.gamma_unit_coord, state.v)):
            fh.write(f"v,{j},{_fmt(c)},{_fmt(x)}\n")


# --- subcommands -------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg, geom, params, state0, step_cfg, t_end = _setup(
        load_config(_config_path(args)), args)
    series = record(state0, geom, params, step_cfg, t_end)
    out = _out_dir(args, cfg)
    write_series_csv(series, os.path.join(out, "series.csv"))
    write_state_csv(series.states[-1], geom, os.path.join(out, "final_state.csv"))
    manifest = {
        "command": "simulate",
        "version": __version__,
        "tolerances": {"dt": step_cfg.dt, "newton_tol": step_cfg.newton_tol,
                       "newton_max_iter": step_cfg.newton_max_iter,
                       "linear_tol": step_cfg.linear_tol},
        "config": cfg,
    }
    with open(os.path.join(out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    print(f"wrote {out}/series.csv ({len(series)} records), "
          f"final_state.csv, manifest.json")
    return 0


def cmd_equilibrium(args) -> int:
    cfg, geom, params, state0, _, _ = _setup(
        load_config(_config_path(args)), args)
    m = mass(state0, geom, params)
    eq = solve_equilibrium(params, geom, m)
    print(f"u_inf={_fmt(eq.u_inf)}")
    print(f"v_inf={_fmt(eq.v_inf)}")
    print(f"mass={_fmt(eq.mass)}")
    print(f"ckp_constant={_fmt(ckp_constant(params, m))}")
    return 0


def cmd_monotone(args) -> int:
    cfg, geom, params, state0, step_cfg, t_end = _setup(
        load_config(_config_path(args)), args)
    solution, report = run_monotone(state0, geom, params, step_cfg, t_end,
                                    outer_tol=args.outer_tol, k_max=args.k_max)
    out = _out_dir(args, cfg)
    with open(os.path.join(out, "gaps.csv"), "w", encoding="utf-8") as fh:
        fh.write("k,gap,margin_lower,margin_cross,margin_upper\n")
        fh.write(f"0,{_fmt(report.gaps[0])},,,\n")
        for k in range(1, report.k_final + 1):
            fh.write(f"{k},{_fmt(report.gaps[k])},"
                     f"{_fmt(report.violations_lower[k - 1])},"
                     f"{_fmt(report.violations_cross[k - 1])},"
                     f"{_fmt(report.violations_upper[k - 1])}\n")
    write_state_csv(solution[-1], geom, os.path.join(out, "final_state.csv"))
    n_last = len(report.times) - 1
    write_state_csv(State(report.lower_u[-1][n_last], report.lower_v[-1][n_last],
                          float(report.times[-1])), geom,
                    os.path.join(out, "final_lower.csv"))
    write_state_csv(State(report.upper_u[-1][n_last], report.upper_v[-1][n_last],
                          float(report.times[-1])), geom,
                    os.path.join(out, "final_upper.csv"))
    verdict = check_sandwich(report)
    print(f"converged in {report.k_final} sweeps, final gap "
          f"{_fmt(report.gaps[-1])}, ordering "
          f"{'intact' if verdict.passed else 'VIOLATED'} "
          f"(worst margin {_fmt(verdict.worst_violation)})")
    return 0


def _suite_conservation(geom, params, state0, step_cfg, t_end, seed):
    series = record(state0, geom, params, step_cfg, t_end)
    drift = float(np.max(np.abs(series.mass - series.mass[0])))
    tol = 1e-8 * max(1.0, abs(series.mass[0]))
    return drift <= tol, {"max_drift": drift, "tolerance": tol}


def _suite_entropy(geom, params, state0, step_cfg, t_end, seed):
    series = record(state0, geom, params, step_cfg, t_end)
    increase = float(np.max(np.diff(series.entropy))) if len(series) > 1 else 0.0
    slack = 1e-9 * max(1.0, abs(series.entropy[0]))
    d_min = float(np.min(series.dissipation))
    ok = increase <= slack and d_min >= -1e-12 * max(1.0, abs(d_min))
    return ok, {"max_increase": increase, "slack": slack,
                "min_dissipation": d_min}


def _suite_ckp(geom, params, state0, step_cfg, t_end, seed):
    series = record(state0, geom, params, step_cfg, t_end)
    margin = audit_ckp(series, params)
    tol = -1e-9 * (1.0 + abs(series.entropy_eq))
    return margin >= tol, {"min_margin": margin, "tolerance": tol}


def _suite_sandwich(geom, params, state0, step_cfg, t_end, seed):
    _, report = run_monotone(state0, geom, params, step_cfg, t_end)
    verdict = check_sandwich(report)
    return verdict.passed and report.converged, {
        "worst_margin": verdict.worst_violation,
        "ordering": verdict.ordering,
        "sweeps": report.k_final,
        "final_gap": report.gaps[-1]}


def _suite_comparison(geom, params, state0, step_cfg, t_end, seed):
    rng = np.random.default_rng(seed)
    scale = max(1.0, float(np.max(state0.u)), float(np.max(state0.v)))
    worst = np.inf
    for _ in range(5):
        lo = State(rng.uniform(0.0, scale, geom.n_omega),
                   rng.uniform(0.0, scale, geom.n_gamma), state0.time)
        hi = State(lo.u + rng.uniform(0.0, scale, geom.n_omega),
                   lo.v + rng.uniform(0.0, scale, geom.n_gamma), state0.time)
        verdict = comparison_experiment(lo, hi, geom, params, step_cfg, t_end)
        worst = min(worst, verdict.worst_violation)
        if not verdict.passed:
            return False, {"worst_margin": worst}
    return True, {"worst_margin": worst, "pairs": 5}


def _suite_oracle(geom, params, state0, step_cfg, t_end, seed):
    reference = dense_oracle(state0, geom, params, t_end, n_checkpoints=11)
    final = integrate(state0, geom, params, step_cfg, t_end)
    ref = reference[-1]
    diff = max(float(np.max(np.abs(final.u - ref.u))),
               float(np.max(np.abs(final.v - ref.v))))
    scale = max(1.0, float(np.max(ref.u)), float(np.max(ref.v)))
    tol = 1e-2 * scale
    return diff <= tol, {"sup_diff": diff, "tolerance": tol}


def _suite_degenerate(geom, params, state0, step_cfg, t_end, seed):
    if params.delta_v != 0:
        raise ValueError("degenerate suite requires params.delta_v = 0")
    series = record(state0, geom, params, step_cfg, t_end)
    ratio = audit_degenerate_coupling(series.states, geom, params)
    return ratio > 0, {"min_ratio": ratio}


def _suite_linear_case(geom, params, state0, step_cfg, t_end, seed):
    """For exponents (1, 1) the implicit equations are linear, so the
    monotone midpoint and the coupled solver must agree to solver precision."""
    if params.alpha != 1 or params.beta != 1:
        raise ValueError("linear-case suite requires alpha = beta = 1")
    # certificate two decades below the verdict tolerance; tighter gaps cost
    # sweeps linearly in the horizon without sharpening the verdict
    solution, report = run_monotone(state0, geom, params, step_cfg, t_end,
                                    outer_tol=1e-9)
    final = integrate(state0, geom, params, step_cfg, t_end)
    mid = solution[-1]
    diff = max(float(np.max(np.abs(final.u - mid.u))),
               float(np.max(np.abs(final.v - mid.v))))
    scale = max(1.0, *report.bounds)
    tol = 1e-7 * scale
    return diff <= tol, {"sup_diff": diff, "tolerance": tol,
                         "sweeps": report.k_final}


SUITES = {
    "conservation": _suite_conservation,
    "entropy": _suite_entropy,
    "ckp": _suite_ckp,
    "sandwich": _suite_sandwich,
    "comparison": _suite_comparison,
    "oracle": _suite_oracle,
    "degenerate": _suite_degenerate,
    "linear-case": _suite_linear_case,
}


def cmd_verify(args) -> int:
    cfg, geom, params, state0, step_cfg, t_end = _setup(
        load_config(_config_path(args)), args)
    seed = int(cfg.get("seed", 0))
    passed, metrics = SUITES[args.suite](geom, params, state0, step_cfg,
                                         t_end, seed)
    out = _out_dir(args, cfg)
    verdict = {"suite": args.suite, "passed": bool(passed), "metrics": metrics}
    with open(os.path.join(out, "verdict.json"), "w", encoding="utf-8") as fh:
        json.dump(verdict, fh, indent=2)
        fh.write("\n")
    print(f"suite={args.suite} passed={passed}")
    return 0 if passed else 1


def _set_dotted(cfg: dict, dotted: str, value):
    keys = dotted.split(".")
    node = cfg
    for key in keys[:-1]:
        if not isinstance(node, dict) or key not in node:
            raise ValueError(f"sweep grid key {dotted!r} not found in template")
        node = node[key]
    if not isinstance(node, dict):
        raise ValueError(f"sweep grid key {dotted!r} not found in template")
    node[keys[-1]] = value


def cmd_sweep(args) -> int:
    with open(_config_path(args), "r", encoding="utf-8") as fh:
        sweep_spec = json.load(fh)
    _check_keys(sweep_spec, "sweep config", ("template", "grid"))
    grid = sweep_spec["grid"]
    if not isinstance(grid, dict) or not grid:
        raise ValueError("sweep grid must be a non-empty object")
    for key, vals in grid.items():
        if not isinstance(vals, list) or not vals:
            raise ValueError(f"sweep grid {key!r} must be a non-empty list")
    keys = sorted(grid)
    combos = list(itertools.product(*(grid[k] for k in keys)))

    def one(combo):
        cfg = copy.deepcopy(sweep_spec["template"])
        for key, value in zip(keys, combo):
            _set_dotted(cfg, key, value)
        _, geom, params, state0, step_cfg, t_end = _setup(cfg)
        series = record(state0, geom, params, step_cfg, t_end)
        drift = float(np.max(np.abs(series.mass - series.mass[0])))
        try:
            fit = fit_rate(series)
            c0, eed, r2 = fit.c0_emp, fit.eed_min, fit.r_squared
        except ValueError:  # run already at equilibrium: nothing to fit
            c0 = eed = r2 = float("nan")
        return {"C0_emp": c0, "eed_min": eed, "r_squared": r2,
                "mass_drift": drift}

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(one, combos))
    else:
        results = [one(c) for c in combos]

    out = args.out if args.out is not None else "."
    os.makedirs(out, exist_ok=True)
    metric_names = ("C0_emp", "eed_min", "r_squared", "mass_drift")
    path = os.path.join(out, "sweep.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("run," + ",".join(keys) + "," + ",".join(metric_names) + "\n")
        for i, (combo, res) in enumerate(zip(combos, results)):
            cells = [str(i)] + [json.dumps(v) for v in combo]
            cells += [_fmt(res[name]) for name in metric_names]
            fh.write(",".join(cells) + "\n")
    print(f"wrote {path} ({len(combos)} runs)")
    return 0


def _add_common(p, t_end=False, seed=False, out=True):
    p.add_argument("config", nargs="?", default=None,
                   help="run config (JSON) or a simulate manifest")
    p.add_argument("--config", dest="config_flag", default=None,
                   help="alternative to the positional config path")
    if out:
        p.add_argument("--out", default=None,
                       help="output directory (default: config 'out' or '.')")
    if t_end:
        p.add_argument("--t-end", dest="t_end", type=float, default=None,
                       help="override the config's t_end")
    if seed:
        p.add_argument("--seed", type=int, default=None,
                       help="override the config's seed")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="volsurf",
        description="Finite-volume solver and verification harness for "
                    "volume-surface reaction-diffusion systems.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("simulate", help="integrate and write the observable series")
    _add_common(p, t_end=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("equilibrium", help="print the equilibrium for the "
                                           "config's initial mass")
    _add_common(p, out=False)
    p.set_defaults(func=cmd_equilibrium)

    p = sub.add_parser("monotone", help="run the certified two-sided iteration")
    _add_common(p, t_end=True)
    p.add_argument("--outer-tol", type=float, default=DEFAULT_OUTER_TOL)
    p.add_argument("--k-max", type=int, default=DEFAULT_K_MAX)
    p.set_defaults(func=cmd_monotone)

    p = sub.add_parser("verify", help="run one verification suite")
    _add_common(p, t_end=True, seed=True)
    p.add_argument("--suite", required=True, choices=sorted(SUITES))
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="run a parameter grid from a template")
    _add_common(p)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not hasattr(args, "func"):
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (StepFailure, MonotoneConvergenceError, LinearSolverError,
            OracleFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
