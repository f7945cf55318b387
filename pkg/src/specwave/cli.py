"""Command line front end: simulate, convergence, bound, validate.

Exit codes are part of the contract so CI can gate on them:
0 success, 2 config/schema violation (the message names the field),
3 blow-up during simulation, 4 error estimates indistinguishable from zero,
1 failed invariant in ``validate``.

Every run writes a manifest (config hash, master seed, level list, noise
truncation, grid size, step count, path count) sufficient to reproduce its
outputs byte for byte.  ``SPECWAVE_SEED`` overrides the built-in default
seed; an explicit ``--seed`` wins over both.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .analysis import fit_rate, predicted_exponent, theoretical_weak_bound
from .config import (ConfigError, bound_params_from_declared, config_digest,
                     load_bound_params, load_config)
from .coefficients import NoiseIncrement
from .integrator import BlowUpError, SimConfig, noise_block, path_seed, step
from .mc import run_study
from .spectral import norm_bold_hr, project

DEFAULT_SEED = 12345

__all__ = ["main", "entrypoint"]


def _default_seed() -> int:
    env = os.environ.get("SPECWAVE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError("SPECWAVE_SEED", f"not an integer: {env!r}") from None
    return DEFAULT_SEED


def _fmt(x) -> str:
    return repr(float(x))


def _write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_manifest(out_dir: str, config_path: str, seed: int, cfg: SimConfig,
                    n_paths: int) -> None:
    _write_json(os.path.join(out_dir, "manifest.json"), {
        "config_sha256": config_digest(config_path),
        "master_seed": seed,
        "levels": list(cfg.levels),
        "m_noise": cfg.m_noise,
        "grid_points": cfg.grid_points,
        "n_steps": cfg.n_steps,
        "n_paths": n_paths,
    })


def cmd_simulate(args) -> int:
    setup = load_config(args.config)
    cfg = setup.config
    seed = args.seed
    out_dir = args.out or setup.out_dir or "."
    os.makedirs(out_dir, exist_ok=True)

    rho = setup.monitor_rho
    dt = cfg.dt
    noise = noise_block(path_seed(seed, 0), cfg.n_steps, cfg.m_noise, dt)
    state = project(cfg.initial, cfg.n_ref)
    rows = [(0, 0.0, norm_bold_hr(state, 0.0, cfg.model),
             norm_bold_hr(state, rho, cfg.model))]
    for k in range(cfg.n_steps):
        state = step(state, dt, NoiseIncrement(noise[k], dt), cfg.spec, cfg.grid,
                     cfg.model, step_index=k)
        rows.append((k + 1, (k + 1) * dt, norm_bold_hr(state, 0.0, cfg.model),
                     norm_bold_hr(state, rho, cfg.model)))

    with open(os.path.join(out_dir, "norms.csv"), "w", encoding="utf-8") as fh:
        fh.write("step,t,norm_h0,norm_hrho\n")
        for k, t, n0, nr in rows:
            fh.write(f"{k},{_fmt(t)},{_fmt(n0)},{_fmt(nr)}\n")
    _write_json(os.path.join(out_dir, "state.json"), {
        "level": cfg.n_ref,
        "t_final": cfg.t_final,
        "pos": [float(v) for v in state.pos],
        "vel": [float(v) for v in state.vel],
    })
    _write_manifest(out_dir, args.config, seed, cfg, 1)
    return 0


def cmd_convergence(args) -> int:
    setup = load_config(args.config)
    cfg = setup.config
    if len(cfg.levels) < 3:
        raise ConfigError("levels", "convergence study needs at least 3 levels")
    seed = args.seed
    n_paths = args.paths or setup.n_paths
    out_dir = args.out or setup.out_dir or "."
    os.makedirs(out_dir, exist_ok=True)

    report = run_study(cfg, setup.functional, n_paths, seed,
                       workers=args.workers, monitor_rho=setup.monitor_rho)
    table = report.table

    with open(os.path.join(out_dir, "errors.csv"), "w", encoding="utf-8") as fh:
        fh.write("level,weak_error,weak_stderr,strong_error,strong_stderr,n_paths\n")
        for i, level in enumerate(table.levels):
            fh.write(f"{level},{_fmt(table.weak_error[i])},{_fmt(table.weak_stderr[i])},"
                     f"{_fmt(table.strong_error[i])},{_fmt(table.strong_stderr[i])},"
                     f"{table.n_paths}\n")
    _write_manifest(out_dir, args.config, seed, cfg, n_paths)

    # refuse to fit noise: every error must clear two standard errors
    weak_ok = np.abs(table.weak_error) > 2.0 * table.weak_stderr
    strong_ok = table.strong_error > 2.0 * table.strong_stderr
    if not (np.all(weak_ok) and np.all(strong_ok)):
        print("convergence: error estimates indistinguishable from zero at 2 stderr; "
              "not fitting rates", file=sys.stderr)
        return 4

    weak_fit = fit_rate(list(zip(table.levels, np.abs(table.weak_error))))
    strong_fit = fit_rate(list(zip(table.levels, table.strong_error)))

    out = {
        "reference_level": report.reference_level,
        "reference_note": ("weak and strong errors are measured against the finest "
                           "Galerkin level as a stand-in for the untruncated limit; "
                           "the reference is at least twice the largest study level"),
        "master_seed": seed,
        "n_paths": table.n_paths,
        "levels": list(table.levels),
        "functional": {"kind": report.functional_kind,
                       "bounded": report.functional_bounded,
                       "note": (None if report.functional_bounded else
                                "outside the bounded-smooth hypotheses of the theory")},
        "weak": {
            "errors": [float(v) for v in table.weak_error],
            "stderr": [float(v) for v in table.weak_stderr],
            "slope": weak_fit.slope,
            "intercept": weak_fit.intercept,
            "r_squared": weak_fit.r_squared,
        },
        "strong": {
            "errors": [float(v) for v in table.strong_error],
            "stderr": [float(v) for v in table.strong_stderr],
            "slope": strong_fit.slope,
            "intercept": strong_fit.intercept,
            "r_squared": strong_fit.r_squared,
        },
    }

    if report.moment_mean is not None:
        sup_idx = report.moment_mean.argmax(axis=1)
        levels_all = [report.reference_level, *table.levels]
        out["moment_monitor"] = {
            "rho": report.monitor_rho,
            "levels": levels_all,
            "sup_mean_square": [float(report.moment_mean[i, k])
                                for i, k in enumerate(sup_idx)],
            "sup_stderr": [float(report.moment_stderr[i, k])
                           for i, k in enumerate(sup_idx)],
        }

    if setup.declared is not None:
        d = setup.declared
        try:
            bounds = []
            for level in table.levels:
                cut = cfg.model.theta * np.pi**2 * (level + 1) ** 2
                params = bound_params_from_declared(setup, float(cut))
                bounds.append(theoretical_weak_bound(params))
            expo = predicted_exponent(float(d["gamma"]), float(d["beta"]))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError("declared_norms", str(exc)) from None
        satisfied = bool(np.all(np.abs(table.weak_error) - 3.0 * table.weak_stderr
                                <= np.asarray(bounds)))
        out["bound"] = {
            "gamma": float(d["gamma"]),
            "beta": float(d["beta"]),
            "rho": float(d.get("rho", 0.0)),
            "values": [float(b) for b in bounds],
            "lambda_exponent": expo.lambda_exponent,
            "n_exponent": expo.n_exponent,
            "dominates_measured": satisfied,
        }
        if "moment_f_lip" in d and "moment_b_hs" in d and report.moment_mean is not None:
            env = max(1.0, norm_bold_hr(cfg.initial, report.monitor_rho, cfg.model)) \
                * float(np.exp(cfg.t_final * (float(d["moment_f_lip"])
                                              + 0.5 * float(d["moment_b_hs"]) ** 2)))
            sup_idx = report.moment_mean.argmax(axis=1)
            sups = np.sqrt(report.moment_mean[np.arange(len(sup_idx)), sup_idx])
            sup_se = report.moment_stderr[np.arange(len(sup_idx)), sup_idx]
            # 3-stderr slack on the mean square, mapped through the square root
            slack = 3.0 * sup_se / (2.0 * np.maximum(sups, 1e-300))
            ok = bool(np.all(np.maximum(1.0, sups - slack) <= env))
            out["moment_monitor"]["envelope"] = env
            out["moment_monitor"]["below_envelope"] = ok

    _write_json(os.path.join(out_dir, "report.json"), out)
    print(json.dumps({"weak_slope": weak_fit.slope, "strong_slope": strong_fit.slope,
                      "weak_r_squared": weak_fit.r_squared}, sort_keys=True))
    return 0


def cmd_bound(args) -> int:
    params = load_bound_params(args.config)
    try:
        value = theoretical_weak_bound(params)
        expo = predicted_exponent(params.gamma, params.beta)
    except ValueError as exc:
        raise ConfigError("params", str(exc)) from None
    print(json.dumps({
        "bound": value,
        "lambda_exponent": expo.lambda_exponent,
        "n_exponent": expo.n_exponent,
    }, sort_keys=True))
    return 0


def cmd_validate(args) -> int:
    from . import validate as v
    checks = v.full_checks() if args.full else v.quick_checks()
    results = v.run_checks(checks)
    width = max(len(r.name) for r in results)
    for r in results:
        mark = "PASS" if r.passed else "FAIL"
        line = f"{mark}  {r.name.ljust(width)}"
        if r.detail:
            line += f"  {r.detail}"
        print(line)
    failing = [r for r in results if not r.passed]
    if failing:
        print(f"first failing invariant: {failing[0].name}", file=sys.stderr)
        return 1
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specwave",
        description="Spectral Galerkin stochastic wave simulator and convergence harness",
    )
    parser.add_argument("--version", action="version", version=f"specwave {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one reference-level path")
    sim.add_argument("--config", required=True)
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--out", default=None)
    sim.set_defaults(fn=cmd_simulate)

    conv = sub.add_parser("convergence", help="coupled weak/strong rate study")
    conv.add_argument("--config", required=True)
    conv.add_argument("--seed", type=int, default=None)
    conv.add_argument("--paths", type=int, default=None)
    conv.add_argument("--workers", type=int, default=1)
    conv.add_argument("--out", default=None)
    conv.set_defaults(fn=cmd_convergence)

    bnd = sub.add_parser("bound", help="evaluate the explicit weak-error bound")
    bnd.add_argument("--config", required=True, help="bound parameter JSON file")
    bnd.set_defaults(fn=cmd_bound)

    val = sub.add_parser("validate", help="run the invariant suite")
    tier = val.add_mutually_exclusive_group()
    tier.add_argument("--quick", action="store_true", default=True)
    tier.add_argument("--full", action="store_true", default=False)
    val.set_defaults(fn=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if hasattr(args, "seed") and args.seed is None:
            args.seed = _default_seed()
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except BlowUpError as exc:
        print(f"blow-up: {exc}", file=sys.stderr)
        return 3


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
