"""Runtime invariant suite behind the ``validate`` CLI command.

Each check re-derives an identity or statistical fact from scratch and
raises AssertionError with a short reason when it fails.  The quick tier is
pure algebra and small deterministic runs; the full tier adds the Monte
Carlo closed-form checks.
"""

from __future__ import annotations

import math

import numpy as np

from . import analysis, coefficients, integrator, mc, propagator, spectral

__all__ = ["CheckResult", "quick_checks", "full_checks", "run_checks"]


def _rng(tag: int) -> np.random.Generator:
    return np.random.default_rng(915 + tag)


def _random_state(rng, n):
    return spectral.PairState(rng.standard_normal(n), rng.standard_normal(n))


def check_model_eigenstructure(propagate_fn=propagator.propagate):
    model = spectral.build_model(1.0, 8)
    assert abs(model.lam[0] + math.pi**2) < 1e-12, "first eigenvalue off"
    assert abs(model.lam[2] + 9 * math.pi**2) < 1e-11, "third eigenvalue off"
    m2 = spectral.build_model(4.0, 2)
    assert np.allclose(m2.mu, [2 * math.pi, 4 * math.pi]), "frequencies off"
    assert np.all(np.diff(model.lam) < 0) and np.all(np.diff(model.mu) > 0), "monotonicity"


def check_transform_roundtrip(propagate_fn=propagator.propagate):
    grid = spectral.GridWorkspace(24)
    rng = _rng(1)
    a = rng.standard_normal(24)
    back = grid.analyze(grid.synthesize(a), 24)
    assert np.max(np.abs(back - a)) < 1e-12, "analyze(synthesize) != identity"


def check_parseval(propagate_fn=propagator.propagate):
    model = spectral.build_model(1.0, 10)
    rng = _rng(2)
    a = rng.standard_normal(10)
    # 400-point Gauss-Legendre quadrature of the squared field
    x, w = np.polynomial.legendre.leggauss(400)
    x = 0.5 * (x + 1.0)
    vals = spectral.eval_field(a, x)
    l2 = math.sqrt(0.5 * float(w @ (vals * vals)))
    assert abs(l2 - spectral.norm_hr(a, 0.0, model)) < 1e-8, "Parseval violated"


def check_pair_norm_split(propagate_fn=propagator.propagate):
    model = spectral.build_model(1.3, 12)
    rng = _rng(3)
    st = _random_state(rng, 12)
    for r in (-0.5, 0.0, 0.7):
        whole = spectral.norm_bold_hr(st, r, model) ** 2
        parts = (spectral.norm_hr(st.pos, r / 2.0, model) ** 2
                 + spectral.norm_hr(st.vel, r / 2.0 - 0.5, model) ** 2)
        # identical weighted sums; only the sqrt/square round trip separates them
        assert abs(whole - parts) <= 1e-14 * whole, f"pair norm does not split at r={r}"


def check_projection(propagate_fn=propagator.propagate):
    model = spectral.build_model(1.0, 9)
    rng = _rng(4)
    st = _random_state(rng, 9)
    for k in (0, 3, 9):
        once = spectral.project(st, k)
        twice = spectral.project(once, k)
        assert np.array_equal(once.pos, twice.pos), "projection not idempotent"
        for r in (-0.3, 0.0, 0.5):
            assert (spectral.norm_bold_hr(once, r, model)
                    <= spectral.norm_bold_hr(st, r, model) + 1e-15), "projection expands norm"


def check_hs_partial_sums(propagate_fn=propagator.propagate):
    n = np.arange(1, 1_000_001, dtype=np.float64)
    for beta, tol in ((0.6, 0.3), (1.0, 1e-3), (2.0, 1e-9)):
        oracle = math.sqrt(2.0 * float(np.sum((math.pi**2 * n * n) ** (-beta))))
        val = spectral.hs_norm_lambda_pow(1.0, beta, tol)
        assert abs(val - oracle) < tol, f"hs norm off at beta={beta}"
    try:
        spectral.hs_norm_lambda_pow(1.0, 0.5, 1e-6)
    except ValueError:
        pass
    else:
        raise AssertionError("divergent series not rejected at beta=1/2")


def check_isometry(propagate_fn=propagator.propagate):
    model = spectral.build_model(1.0, 16)
    rng = _rng(5)
    for _ in range(200):
        st = _random_state(rng, 16)
        t = float(rng.uniform(0.0, 10.0))
        before = spectral.norm_bold_hr(st, 0.0, model)
        after = spectral.norm_bold_hr(propagate_fn(st, t, model), 0.0, model)
        assert abs(after - before) < 1e-12 * max(1.0, before), "group is not an isometry"


def check_group_law(propagate_fn=propagator.propagate):
    model = spectral.build_model(1.0, 12)
    rng = _rng(6)
    for _ in range(50):
        st = _random_state(rng, 12)
        s, t = rng.uniform(0.0, 10.0, size=2)
        two = propagate_fn(propagate_fn(st, s, model), t, model)
        one = propagate_fn(st, s + t, model)
        err = max(np.max(np.abs(two.pos - one.pos)), np.max(np.abs(two.vel - one.vel)))
        assert err < 1e-10, "group law violated"


def check_projection_commutes(propagate_fn=propagator.propagate):
    model = spectral.build_model(1.0, 10)
    rng = _rng(7)
    st = _random_state(rng, 10)
    for k in (0, 4, 10):
        for t in (0.3, 2.7):
            a = propagate_fn(spectral.project(st, k), t, model)
            b = spectral.project(propagate_fn(st, t, model), k)
            assert np.array_equal(a.pos, b.pos) and np.array_equal(a.vel, b.vel), \
                "projection does not commute with the group"


def check_generator(propagate_fn=propagator.propagate):
    model = spectral.build_model(1.0, 6)
    rng = _rng(8)
    st = _random_state(rng, 6)
    errs = []
    for h in (1e-3, 1e-4):
        moved = propagate_fn(st, h, model)
        dpos = (moved.pos - st.pos) / h - st.vel
        dvel = (moved.vel - st.vel) / h - model.lam[:6] * st.pos
        errs.append(max(np.max(np.abs(dpos)), np.max(np.abs(dvel))))
    order = math.log(errs[0] / errs[1]) / math.log(10.0)
    assert order > 0.9, f"generator consistency order {order:.2f} < 0.9"


def check_drift_identity(propagate_fn=propagator.propagate):
    model = spectral.build_model(1.0, 4)
    grid = spectral.GridWorkspace(16)
    spec = coefficients.CoefficientSpec(diffusion="zero", drift=lambda x, y: y)
    st = spectral.PairState([1.0, 2.0, 0.0, -0.5], np.zeros(4))
    incr = coefficients.apply_drift(st, spec, grid, model)
    assert np.max(np.abs(incr.vel - st.pos)) < 1e-12, "identity drift distorted"
    assert np.all(incr.pos == 0.0), "drift leaked into position"


def check_dealias_stability(propagate_fn=propagator.propagate):
    model = spectral.build_model(1.0, 6)
    rng = _rng(9)
    pos = rng.standard_normal(6)
    dw = rng.standard_normal(8)
    spec = coefficients.CoefficientSpec(diffusion="anderson", alpha=0.4, beta=1.1)
    noise = coefficients.NoiseIncrement(dw, 1.0)
    out = {}
    for g in (14, 28):
        grid = spectral.GridWorkspace(g)
        st = spectral.PairState(pos, np.zeros(6))
        out[g] = coefficients.apply_diffusion(st, noise, spec, grid, model).vel
    assert np.max(np.abs(out[14] - out[28])) < 1e-10, "product projection grid-dependent"


def check_diffusion_linearity(propagate_fn=propagator.propagate):
    model = spectral.build_model(1.0, 5)
    grid = spectral.GridWorkspace(16)
    rng = _rng(10)
    st = _random_state(rng, 5)
    dw = rng.standard_normal(8)
    spec = coefficients.CoefficientSpec(diffusion="anderson", alpha=0.7, beta=0.9)
    one = coefficients.apply_diffusion(st, coefficients.NoiseIncrement(dw, 1.0),
                                       spec, grid, model).vel
    scaled = coefficients.apply_diffusion(st, coefficients.NoiseIncrement(3.5 * dw, 1.0),
                                          spec, grid, model).vel
    assert np.max(np.abs(scaled - 3.5 * one)) < 1e-12, "diffusion not linear in noise"


def check_zero_spec_reduces_to_group(propagate_fn=propagator.propagate):
    cfg = _small_config("zero")
    term = integrator.simulate_path(cfg, cfg.n_ref, integrator.path_seed(7, 0))
    exact = propagate_fn(cfg.initial, cfg.t_final, cfg.model)
    err = max(np.max(np.abs(term.pos - exact.pos)), np.max(np.abs(term.vel - exact.vel)))
    assert err < 1e-10, "zero-coefficient path deviates from the group"


def check_path_determinism(propagate_fn=propagator.propagate):
    cfg = _small_config("anderson")
    a = integrator.simulate_path(cfg, 4, integrator.path_seed(11, 3))
    b = integrator.simulate_path(cfg, 4, integrator.path_seed(11, 3))
    assert np.array_equal(a.pos, b.pos) and np.array_equal(a.vel, b.vel), \
        "same seed produced different paths"


def check_coupled_matches_single(propagate_fn=propagator.propagate):
    cfg = _small_config("anderson")
    seed = integrator.path_seed(13, 5)
    coupled = integrator.simulate_coupled(cfg, seed)
    for level in (*cfg.levels, cfg.n_ref):
        single = integrator.simulate_path(cfg, level, seed)
        assert np.array_equal(coupled[level].pos, single.pos), "coupled != single (pos)"
        assert np.array_equal(coupled[level].vel, single.vel), "coupled != single (vel)"


def check_batch_matches_single(propagate_fn=propagator.propagate):
    cfg = _small_config("anderson")
    phi = mc.exp_neg_norm()
    out = integrator.run_chunk(cfg, (cfg.n_ref, *cfg.levels), range(0, 3), 17,
                               phi=phi, strong_vs_first=True)
    for row, idx in enumerate(range(0, 3)):
        coupled = integrator.simulate_coupled(cfg, integrator.path_seed(17, idx))
        ref = coupled[cfg.n_ref]
        got = out["phi"][row, 0]
        want = phi.evaluate(ref, cfg.model)
        assert abs(got - want) < 1e-12, "batched functional deviates from reference"


def check_rate_fit_exact(propagate_fn=propagator.propagate):
    for slope in (-2.0, -1.0, -0.5, -0.25):
        pts = [(n, 3.7 * n**slope) for n in (4, 8, 16, 32)]
        fit = analysis.fit_rate(pts)
        assert abs(fit.slope - slope) < 1e-12 and fit.r_squared > 1 - 1e-12, \
            "pure power law not recovered"


def check_mittag_closed_form(propagate_fn=propagator.propagate):
    for x in np.linspace(0.0, 3.0, 13):
        want = math.exp(0.5 * x * x)
        got = analysis.mittag_envelope(1.0, float(x), 1e-10)
        assert abs(got - want) < 1e-8 * want, "series envelope off at r=1"


def check_bound_monotone(propagate_fn=propagator.propagate):
    rng = _rng(12)
    base = dict(t_final=1.0, phi_c2b=1.0, xi_l2_rho=1.0, xi_l1_smooth=1.0,
                f_lip_smooth=1.0, f_lip_rho=1.0, f_lip0=1.0, b_lip_gamma_op=1.0,
                b_lip_rho_hs=1.0, b_lip0_hs=1.0, f_second=1.0, b_second=1.0,
                lambda_pow_hs=1.0, lambda_cut=2.0, gamma=1.0, beta=0.75)
    names = [k for k in base if k not in ("lambda_cut", "gamma", "beta")]
    v0 = analysis.theoretical_weak_bound(analysis.BoundParams(**base))
    for _ in range(40):
        name = names[int(rng.integers(len(names)))]
        bumped = dict(base)
        bumped[name] = base[name] + float(rng.uniform(0.0, 1.0))
        v1 = analysis.theoretical_weak_bound(analysis.BoundParams(**bumped))
        assert v1 >= v0 - 1e-12, f"bound decreased when {name} grew"


def check_functional_curvature(propagate_fn=propagator.propagate):
    model = spectral.build_model(1.0, 8)
    rng = _rng(14)
    direction = _random_state(rng, 8)
    scale = spectral.norm_bold_hr(direction, 0.0, model)
    direction = spectral.PairState(direction.pos / scale, direction.vel / scale)
    for phi in (mc.exp_neg_norm(), mc.cos_pairing(direction)):
        for _ in range(25):
            x = _random_state(rng, 8)
            h = _random_state(rng, 8)
            hn = spectral.norm_bold_hr(h, 0.0, model)
            h = spectral.PairState(h.pos / hn, h.vel / hn)
            eps = 1e-4
            plus = spectral.PairState(x.pos + eps * h.pos, x.vel + eps * h.vel)
            minus = spectral.PairState(x.pos - eps * h.pos, x.vel - eps * h.vel)
            second = (phi.evaluate(plus, model) - 2.0 * phi.evaluate(x, model)
                      + phi.evaluate(minus, model)) / eps**2
            assert abs(second) < 10.0, f"{phi.kind} second difference {second:.2f} > 10"


# --- full tier -------------------------------------------------------------

def check_noise_chi_square(propagate_fn=propagator.propagate):
    rng = np.random.default_rng(321)
    dt = 0.25
    draws = np.array([coefficients.sample_noise(rng, 4, dt).dw[0] for _ in range(100_000)])
    assert abs(np.mean(draws**2 / dt) - 1.0) < 0.02, "increment variance off"


def check_additive_ito_isometry(propagate_fn=propagator.propagate):
    cfg = _small_config("additive")
    n, m = cfg.n_ref, cfg.m_noise
    sigma = 0.5
    closed = (spectral.norm_bold_hr(cfg.initial, 0.0, cfg.model) ** 2
              + cfg.t_final * sigma**2
              * float(np.sum(1.0 / cfg.model.abs_lam(min(n, m)))))
    vals = np.empty(4000)
    out = integrator.run_chunk(cfg, (cfg.n_ref,), range(4000), 99,
                               phi=_h0_sq_functional())
    vals[:] = out["phi"][:, 0]
    mean = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(len(vals)))
    assert abs(mean - closed) <= 3.0 * se, \
        f"second moment {mean:.5f} vs closed form {closed:.5f} beyond 3 se={se:.2g}"


def check_additive_zero_mean(propagate_fn=propagator.propagate):
    cfg = _small_config("additive")
    phi = mc.coordinate(2, "vel")
    mean, se = mc.estimate_functional(phi, cfg, cfg.n_ref, 10_000, 424242)
    assert abs(mean) <= 3.0 * se, "stochastic convolution mean is not centered"


def check_moment_envelope_small(propagate_fn=propagator.propagate):
    cfg = _small_config("anderson")
    report = mc.run_study(cfg, mc.exp_neg_norm(), 2000, 5150, monitor_rho=0.0)
    sup = float(np.sqrt(report.moment_mean.max()))
    b_hs = 1.0 / math.sqrt(3.0 * cfg.model.theta)
    envelope = max(1.0, spectral.norm_bold_hr(cfg.initial, 0.0, cfg.model)) \
        * math.exp(cfg.t_final * 0.5 * b_hs**2)
    assert max(1.0, sup) <= envelope * 1.05, \
        f"moment sup {sup:.4f} above envelope {envelope:.4f}"


def _h0_sq_functional():
    return mc.TestFunctional("h0_sq", False, lambda pos, vel, model: _h0_batch(pos, vel, model))


def _h0_batch(pos, vel, model):
    inv_lam = 1.0 / model.abs_lam(pos.shape[-1])
    return (pos * pos).sum(axis=-1) + (vel * vel * inv_lam).sum(axis=-1)


def _small_config(kind: str) -> integrator.SimConfig:
    model = spectral.build_model(1.0, 8)
    pos = np.zeros(8)
    pos[0] = 1.0
    initial = spectral.PairState(pos, np.zeros(8))
    if kind == "additive":
        spec = coefficients.preset("additive-heat-kick", m_noise=16, n_modes=8, sigma=0.5)
    elif kind == "zero":
        spec = coefficients.preset("zero")
    else:
        spec = coefficients.preset("anderson")
    return integrator.SimConfig(model=model, levels=(2, 4), t_final=1.0, n_steps=32,
                                m_noise=16, spec=spec, initial=initial)


QUICK = [
    ("model eigenstructure", check_model_eigenstructure),
    ("transform roundtrip", check_transform_roundtrip),
    ("parseval", check_parseval),
    ("pair norm split", check_pair_norm_split),
    ("projection idempotent and contractive", check_projection),
    ("hilbert-schmidt partial sums", check_hs_partial_sums),
    ("group isometry", check_isometry),
    ("group law", check_group_law),
    ("projection commutes with group", check_projection_commutes),
    ("generator consistency", check_generator),
    ("identity drift", check_drift_identity),
    ("product dealiasing", check_dealias_stability),
    ("diffusion linear in noise", check_diffusion_linearity),
    ("zero coefficients reduce to group", check_zero_spec_reduces_to_group),
    ("path determinism", check_path_determinism),
    ("coupled equals single-path", check_coupled_matches_single),
    ("batched engine equals reference", check_batch_matches_single),
    ("rate fit exact on power laws", check_rate_fit_exact),
    ("series envelope closed form", check_mittag_closed_form),
    ("bound monotone in norms", check_bound_monotone),
    ("functional curvature bounded", check_functional_curvature),
]

FULL_EXTRA = [
    ("noise chi-square", check_noise_chi_square),
    ("additive ito isometry", check_additive_ito_isometry),
    ("additive zero mean", check_additive_zero_mean),
    ("moment envelope", check_moment_envelope_small),
]


def quick_checks(propagate_fn=propagator.propagate):
    return [(name, fn, propagate_fn) for name, fn in QUICK]


def full_checks(propagate_fn=propagator.propagate):
    return quick_checks(propagate_fn) + [(n, f, propagate_fn) for n, f in FULL_EXTRA]


class CheckResult:
    def __init__(self, name: str, passed: bool, detail: str = ""):
        self.name = name
        self.passed = passed
        self.detail = detail


def run_checks(checks) -> list[CheckResult]:
    results = []
    for name, fn, propagate_fn in checks:
        try:
            fn(propagate_fn=propagate_fn)
        except AssertionError as exc:
            results.append(CheckResult(name, False, str(exc)))
        except Exception as exc:  # report, never crash the table
            results.append(CheckResult(name, False, f"{type(exc).__name__}: {exc}"))
        else:
            results.append(CheckResult(name, True))
    return results
