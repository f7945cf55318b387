"""Run configuration: schema-checked JSON with a restricted expression subset.

A config file is a UTF-8 JSON object with flat keys grouped in sections
``model``, ``time``, ``noise``, ``coefficients``, ``study``, ``output``.
Drift and pointwise-diffusion functions are given as expressions over the
closed vocabulary {x, y, numeric constants, +, -, *, sin, cos, tanh}; the
subset is large enough for smooth test nonlinearities and small enough to
validate node by node.
"""

from __future__ import annotations

import ast
import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import mc
from .analysis import BoundParams
from .coefficients import CoefficientSpec, preset
from .integrator import SimConfig
from .spectral import PairState, build_model, hs_norm_lambda_pow

__all__ = [
    "ConfigError",
    "RunSetup",
    "compile_expression",
    "load_config",
    "load_bound_params",
    "config_digest",
]


class ConfigError(ValueError):
    """Schema violation; the message names the offending field."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{message} (field: {field})")


_ALLOWED_CALLS = ("sin", "cos", "tanh")
_EVAL_NAMES = {"sin": np.sin, "cos": np.cos, "tanh": np.tanh}


def compile_expression(text: str, field: str):
    """Compile an expression over {x, y, constants, +, -, *, sin, cos, tanh}."""
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(field, f"invalid expression: {exc.msg}") from None

    def check(node):
        if isinstance(node, ast.BinOp) and isinstance(node.op, (ast.Add, ast.Sub,
                                                                ast.Mult)):
            check(node.left)
            check(node.right)
            return
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            check(node.operand)
            return
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return
        if isinstance(node, ast.Name) and node.id in ("x", "y"):
            return
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in _ALLOWED_CALLS and len(node.args) == 1
                and not node.keywords):
            check(node.args[0])
            return
        raise ConfigError(field, f"expression uses a construct outside the subset: "
                                 f"{ast.dump(node)[:60]}")

    check(tree.body)
    code = compile(tree, f"<{field}>", "eval")

    def fn(x, y):
        out = eval(code, {"__builtins__": {}}, {**_EVAL_NAMES, "x": x, "y": y})
        return np.broadcast_to(np.asarray(out, dtype=np.float64), np.broadcast_shapes(
            np.shape(x), np.shape(y)))

    return fn


def _section(raw: dict, name: str, required: bool = True) -> dict:
    sec = raw.get(name)
    if sec is None:
        if required:
            raise ConfigError(name, "missing required section")
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(name, "section must be an object")
    return sec


def _get(sec: dict, section: str, key: str, kind, required: bool = True, default=None):
    if key not in sec:
        if required:
            raise ConfigError(key, f"missing required field {section}.{key}")
        return default
    val = sec[key]
    if kind is float and isinstance(val, (int, float)) and not isinstance(val, bool):
        return float(val)
    if kind is int and isinstance(val, int) and not isinstance(val, bool):
        return int(val)
    if kind is str and isinstance(val, str):
        return val
    if kind is list and isinstance(val, list):
        return val
    if kind is dict and isinstance(val, dict):
        return val
    raise ConfigError(key, f"{section}.{key} must be of type {kind.__name__}")


def _coeff_vector(mapping: dict, n_modes: int, field: str) -> np.ndarray:
    out = np.zeros(n_modes)
    for key, val in mapping.items():
        try:
            mode = int(key)
        except ValueError:
            raise ConfigError(field, f"mode keys must be integers, got {key!r}") from None
        if not 1 <= mode <= n_modes:
            raise ConfigError(field, f"mode {mode} outside 1..{n_modes}")
        if not isinstance(val, (int, float)) or isinstance(val, bool):
            raise ConfigError(field, "mode values must be numbers")
        out[mode - 1] = float(val)
    return out


@dataclass(frozen=True)
class RunSetup:
    """Everything a CLI command needs: simulation config plus reporting knobs."""

    config: SimConfig
    functional: mc.TestFunctional
    n_paths: int
    monitor_rho: float
    declared: dict | None
    hs_tol: float
    out_dir: str | None


def load_config(path: str) -> RunSetup:
    raw = _load_json(path)

    model_sec = _section(raw, "model")
    theta = _get(model_sec, "model", "theta", float)
    n_ref = _get(model_sec, "model", "n_ref", int)
    grid_points = _get(model_sec, "model", "grid_points", int, required=False, default=0)
    model = _wrap(lambda: build_model(theta, n_ref), "theta")
    initial_sec = _get(model_sec, "model", "initial", dict, required=False,
                       default={"pos": {}, "vel": {}})
    pos = _coeff_vector(initial_sec.get("pos", {}), n_ref, "initial.pos")
    vel = _coeff_vector(initial_sec.get("vel", {}), n_ref, "initial.vel")
    initial = PairState(pos, vel)

    time_sec = _section(raw, "time")
    t_final = _get(time_sec, "time", "t_final", float)
    n_steps = _get(time_sec, "time", "n_steps", int)

    noise_sec = _section(raw, "noise")
    m_noise = _get(noise_sec, "noise", "m_noise", int)

    spec = _coefficients(_section(raw, "coefficients"), m_noise, n_ref)

    study_sec = _section(raw, "study", required=False)
    levels = study_sec.get("levels", [])
    if not isinstance(levels, list) or not all(
            isinstance(n, int) and not isinstance(n, bool) for n in levels):
        raise ConfigError("levels", "study.levels must be a list of integers")
    n_paths = _get(study_sec, "study", "n_paths", int, required=False, default=1000)
    monitor_rho = _get(study_sec, "study", "rho_monitor", float, required=False, default=0.0)
    functional = _functional(study_sec.get("functional", {"kind": "exp_neg_norm"}), n_ref)

    out_sec = _section(raw, "output", required=False)
    out_dir = _get(out_sec, "output", "directory", str, required=False)

    declared = spec.declared_norms
    hs_tol = 1e-6
    if declared is not None:
        declared = dict(declared)
        hs_tol = float(declared.pop("hs_tol", 1e-6))

    config = _wrap(lambda: SimConfig(model=model, levels=tuple(levels), t_final=t_final,
                                     n_steps=n_steps, m_noise=m_noise, spec=spec,
                                     initial=initial, grid_points=grid_points),
                   "model")
    return RunSetup(config, functional, n_paths, monitor_rho, declared, hs_tol, out_dir)


def _wrap(builder, field):
    try:
        return builder()
    except ValueError as exc:
        raise ConfigError(field, str(exc)) from None


def _coefficients(sec: dict, m_noise: int, n_ref: int) -> CoefficientSpec:
    declared = sec.get("declared_norms")
    if declared is not None and not isinstance(declared, dict):
        raise ConfigError("declared_norms", "coefficients.declared_norms must be an object")

    drift = None
    if "drift" in sec:
        drift = compile_expression(_get(sec, "coefficients", "drift", str), "drift")

    name = sec.get("preset")
    if name is not None:
        if name not in ("anderson", "zero", "additive-heat-kick"):
            raise ConfigError("preset", f"unknown preset {name!r}")
        sigma = _get(sec, "coefficients", "sigma", float, required=False, default=1.0)
        base = _wrap(lambda: preset(name, m_noise=m_noise, n_modes=n_ref, sigma=sigma),
                     "preset")
        alpha = _get(sec, "coefficients", "alpha", float, required=False, default=base.alpha)
        beta = _get(sec, "coefficients", "beta", float, required=False, default=base.beta)
        return CoefficientSpec(diffusion=base.diffusion, drift=drift, alpha=alpha,
                               beta=beta, columns=base.columns, declared_norms=declared)

    kind = _get(sec, "coefficients", "kind", str)
    if kind == "anderson":
        alpha = _get(sec, "coefficients", "alpha", float, required=False, default=0.0)
        beta = _get(sec, "coefficients", "beta", float, required=False, default=1.0)
        return CoefficientSpec(diffusion="anderson", drift=drift, alpha=alpha,
                               beta=beta, declared_norms=declared)
    if kind == "pointwise":
        b_fn = compile_expression(_get(sec, "coefficients", "b", str), "b")
        return CoefficientSpec(diffusion="pointwise", drift=drift, pointwise_b=b_fn,
                               declared_norms=declared)
    if kind == "zero":
        return CoefficientSpec(diffusion="zero", drift=drift, declared_norms=declared)
    raise ConfigError("kind", f"unknown diffusion kind {kind!r}")


def _functional(sec: dict, n_ref: int) -> mc.TestFunctional:
    if not isinstance(sec, dict):
        raise ConfigError("functional", "study.functional must be an object")
    kind = sec.get("kind", "exp_neg_norm")
    if kind == "exp_neg_norm":
        return mc.exp_neg_norm()
    if kind == "cos_pairing":
        direction = sec.get("direction", {})
        pos = _coeff_vector(direction.get("pos", {}), n_ref, "functional.direction")
        vel = _coeff_vector(direction.get("vel", {}), n_ref, "functional.direction")
        return mc.cos_pairing(PairState(pos, vel))
    if kind == "coordinate":
        mode = sec.get("mode")
        component = sec.get("component")
        if not isinstance(mode, int) or isinstance(mode, bool):
            raise ConfigError("mode", "functional.mode must be an integer")
        if component not in ("pos", "vel"):
            raise ConfigError("component", "functional.component must be 'pos' or 'vel'")
        return mc.coordinate(mode, component)
    raise ConfigError("functional", f"unknown functional kind {kind!r}")


_BOUND_FIELDS = {
    "t_final", "phi_c2b", "xi_l2_rho", "xi_l1_smooth", "f_lip_smooth",
    "f_lip_rho", "f_lip0", "b_lip_gamma_op", "b_lip_rho_hs", "b_lip0_hs",
    "f_second", "b_second", "lambda_pow_hs", "lambda_cut", "gamma", "beta",
}


def load_bound_params(path: str) -> BoundParams:
    """Read the explicit-bound inputs from a flat JSON object."""
    raw = _load_json(path)
    unknown = set(raw) - _BOUND_FIELDS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown bound parameter")
    values = {}
    for name in _BOUND_FIELDS:
        if name not in raw:
            raise ConfigError(name, f"missing required field {name}")
        val = raw[name]
        if not isinstance(val, (int, float)) or isinstance(val, bool):
            raise ConfigError(name, f"{name} must be a number")
        values[name] = float(val)
    return BoundParams(**values)


def bound_params_from_declared(setup: RunSetup, lambda_cut: float) -> BoundParams:
    """Assemble bound inputs from declared norms plus computed model quantities.

    Initial-state norms are computed exactly (the initial state is
    deterministic); the Hilbert-Schmidt factor gets a conservative upper
    estimate folding in the summation tolerance.
    """
    from .spectral import norm_bold_hr

    d = setup.declared
    if d is None:
        raise ConfigError("declared_norms", "bound evaluation needs declared norms")
    for key in ("gamma", "beta"):
        if key not in d:
            raise ConfigError(key, f"declared_norms.{key} required for the bound")
    gamma, beta = float(d["gamma"]), float(d["beta"])
    rho = float(d.get("rho", 0.0))
    model = setup.config.model
    initial = setup.config.initial
    hs = hs_norm_lambda_pow(model.theta, beta, setup.hs_tol)
    hs_upper = float(np.sqrt(hs * hs + setup.hs_tol**2))

    def need(key):
        if key not in d:
            raise ConfigError(key, f"declared_norms.{key} required for the bound")
        return float(d[key])

    return BoundParams(
        t_final=setup.config.t_final,
        phi_c2b=need("phi_c2b"),
        xi_l2_rho=norm_bold_hr(initial, rho, model),
        xi_l1_smooth=norm_bold_hr(initial, 2.0 * (gamma - beta), model),
        f_lip_smooth=need("f_lip_smooth"),
        f_lip_rho=need("f_lip_rho"),
        f_lip0=need("f_lip0"),
        b_lip_gamma_op=need("b_lip_gamma_op"),
        b_lip_rho_hs=need("b_lip_rho_hs"),
        b_lip0_hs=need("b_lip0_hs"),
        f_second=need("f_second"),
        b_second=need("b_second"),
        lambda_pow_hs=hs_upper,
        lambda_cut=lambda_cut,
        gamma=gamma,
        beta=beta,
    )


def _load_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError("config", f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config", "config root must be an object")
    return raw


def config_digest(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()
