import json
import math
import os

import numpy as np
import pytest

import specwave as sw
from specwave import validate as val
from specwave.cli import main

ZERO_CONFIG = {
    "model": {"theta": 1.0, "n_ref": 8,
              "initial": {"pos": {"1": 1.0, "3": 0.5}, "vel": {"2": -0.25}}},
    "time": {"t_final": 1.0, "n_steps": 64},
    "noise": {"m_noise": 8},
    "coefficients": {"preset": "zero"},
    "study": {"levels": [2, 4, 6], "n_paths": 64,
              "functional": {"kind": "exp_neg_norm"}},
}

SMALL_ANDERSON = {
    "model": {"theta": 1.0, "n_ref": 16, "grid_points": 48,
              "initial": {"pos": {"1": 1.0}, "vel": {}}},
    "time": {"t_final": 1.0, "n_steps": 32},
    "noise": {"m_noise": 32},
    "coefficients": {"preset": "anderson"},
    "study": {"levels": [2, 4, 8], "n_paths": 400,
              "functional": {"kind": "exp_neg_norm"}},
}


def write_config(tmp_path, obj, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj, indent=1), encoding="utf-8")
    return str(path)


def read(path):
    with open(path, "rb") as fh:
        return fh.read()


class TestSimulate:
    def test_zero_preset_isometry(self, tmp_path):
        cfg = write_config(tmp_path, ZERO_CONFIG)
        out = tmp_path / "out"
        assert main(["simulate", "--config", cfg, "--seed", "7", "--out", str(out)]) == 0
        lines = (out / "norms.csv").read_text().strip().splitlines()
        assert lines[0] == "step,t,norm_h0,norm_hrho"
        first = float(lines[1].split(",")[2])
        last = float(lines[-1].split(",")[2])
        assert abs(first - last) < 1e-10

    def test_missing_field_names_it(self, tmp_path, capsys):
        broken = json.loads(json.dumps(ZERO_CONFIG))
        del broken["time"]["n_steps"]
        cfg = write_config(tmp_path, broken)
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
        assert "n_steps" in capsys.readouterr().err

    def test_byte_identical_reruns(self, tmp_path):
        cfg = write_config(tmp_path, SMALL_ANDERSON)
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert main(["simulate", "--config", cfg, "--seed", "5",
                         "--out", str(out)]) == 0
            outs.append(out)
        for fname in ("norms.csv", "state.json", "manifest.json"):
            assert read(outs[0] / fname) == read(outs[1] / fname)

    def test_env_seed_default(self, tmp_path, monkeypatch):
        cfg = write_config(tmp_path, ZERO_CONFIG)
        out = tmp_path / "env"
        monkeypatch.setenv("SPECWAVE_SEED", "9001")
        assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
        manifest = json.loads(read(out / "manifest.json"))
        assert manifest["master_seed"] == 9001

    def test_blow_up_exit_code(self, tmp_path):
        exploding = json.loads(json.dumps(SMALL_ANDERSON))
        exploding["coefficients"]["beta"] = 1e160
        cfg = write_config(tmp_path, exploding)
        assert main(["simulate", "--config", cfg, "--seed", "1",
                     "--out", str(tmp_path / "x")]) == 3


class TestConvergence:
    def test_small_anderson_run(self, tmp_path):
        cfg = write_config(tmp_path, SMALL_ANDERSON)
        out = tmp_path / "conv"
        assert main(["convergence", "--config", cfg, "--seed", "3",
                     "--out", str(out)]) == 0
        lines = (out / "errors.csv").read_text().strip().splitlines()
        assert lines[0] == "level,weak_error,weak_stderr,strong_error,strong_stderr,n_paths"
        assert len(lines) == 4
        assert [int(l.split(",")[0]) for l in lines[1:]] == [2, 4, 8]
        report = json.loads(read(out / "report.json"))
        assert report["reference_level"] == 16
        assert "substitution" not in report  # proxy disclosed in prose note
        assert "stand-in" in report["reference_note"]
        assert report["strong"]["slope"] < 0
        manifest = json.loads(read(out / "manifest.json"))
        assert set(manifest) == {"config_sha256", "master_seed", "levels", "m_noise",
                                 "grid_points", "n_steps", "n_paths"}
        assert manifest["n_paths"] == 400

    def test_paths_flag_overrides(self, tmp_path):
        cfg = write_config(tmp_path, SMALL_ANDERSON)
        out = tmp_path / "conv2"
        # few paths may legitimately refuse the fit; the override still lands
        assert main(["convergence", "--config", cfg, "--seed", "3",
                     "--paths", "64", "--out", str(out)]) in (0, 4)
        lines = (out / "errors.csv").read_text().strip().splitlines()
        assert lines[1].endswith(",64")
        manifest = json.loads(read(out / "manifest.json"))
        assert manifest["n_paths"] == 64

    def test_zero_spec_refuses_to_fit_noise(self, tmp_path):
        cfg = write_config(tmp_path, ZERO_CONFIG)
        out = tmp_path / "noise"
        assert main(["convergence", "--config", cfg, "--seed", "4",
                     "--out", str(out)]) == 4
        assert (out / "errors.csv").exists()
        assert not (out / "report.json").exists()

    def test_needs_three_levels(self, tmp_path, capsys):
        few = json.loads(json.dumps(SMALL_ANDERSON))
        few["study"]["levels"] = [2, 4]
        cfg = write_config(tmp_path, few)
        assert main(["convergence", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
        assert "levels" in capsys.readouterr().err

    def test_worker_counts_agree_bytewise(self, tmp_path):
        cfg = write_config(tmp_path, SMALL_ANDERSON)
        outs = []
        for name, workers in (("w1", "1"), ("w3", "3")):
            out = tmp_path / name
            assert main(["convergence", "--config", cfg, "--seed", "6",
                         "--workers", workers, "--out", str(out)]) == 0
            outs.append(out)
        assert read(outs[0] / "errors.csv") == read(outs[1] / "errors.csv")
        assert read(outs[0] / "manifest.json") == read(outs[1] / "manifest.json")


class TestBound:
    def test_all_ones_worked_example(self, tmp_path, capsys):
        path = os.path.join(os.path.dirname(__file__), "..", "configs",
                            "bound_all_ones.json")
        assert main(["bound", "--config", path]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["bound"] == pytest.approx(3 * math.sqrt(3) * math.exp(10.5),
                                             rel=1e-12)
        assert out["lambda_exponent"] == pytest.approx(-0.25)
        assert out["n_exponent"] == pytest.approx(-0.5)

    def test_zero_norms(self, tmp_path, capsys):
        params = json.loads(read(os.path.join(os.path.dirname(__file__), "..",
                                              "configs", "bound_all_ones.json")))
        for key in params:
            if key not in ("t_final", "gamma", "beta", "lambda_cut", "phi_c2b"):
                params[key] = 0.0
        cfg = write_config(tmp_path, params, "bound.json")
        assert main(["bound", "--config", cfg]) == 0
        assert json.loads(capsys.readouterr().out)["bound"] == 0.0

    def test_hypothesis_violation_exits_two(self, tmp_path, capsys):
        params = json.loads(read(os.path.join(os.path.dirname(__file__), "..",
                                              "configs", "bound_all_ones.json")))
        params["beta"] = 0.4  # outside (gamma/2, gamma]
        cfg = write_config(tmp_path, params, "bound.json")
        assert main(["bound", "--config", cfg]) == 2
        assert "beta" in capsys.readouterr().err

    def test_missing_field_named(self, tmp_path, capsys):
        params = json.loads(read(os.path.join(os.path.dirname(__file__), "..",
                                              "configs", "bound_all_ones.json")))
        del params["lambda_pow_hs"]
        cfg = write_config(tmp_path, params, "bound.json")
        assert main(["bound", "--config", cfg]) == 2
        assert "lambda_pow_hs" in capsys.readouterr().err


class TestValidate:
    def test_quick_suite_passes(self, capsys):
        assert main(["validate", "--quick"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out

    def test_injected_sign_error_fails_isometry(self):
        # mutation check: flip the sign of the velocity rotation term
        def broken(state, t, model):
            from specwave.propagator import rotation_tables
            cos_t, sin_t, mu = rotation_tables(model, t, state.n_modes)
            new_pos = cos_t * state.pos + (sin_t / mu) * state.vel
            new_vel = (mu * sin_t) * state.pos + cos_t * state.vel
            return sw.PairState(new_pos, new_vel)

        results = val.run_checks(val.quick_checks(propagate_fn=broken))
        by_name = {r.name: r for r in results}
        assert not by_name["group isometry"].passed


class TestExpressionSubset:
    def test_drift_expression_runs(self, tmp_path):
        cfg_obj = json.loads(json.dumps(SMALL_ANDERSON))
        cfg_obj["coefficients"]["drift"] = "sin(x) - 0.5 * tanh(y)"
        cfg = write_config(tmp_path, cfg_obj)
        out = tmp_path / "drifted"
        assert main(["simulate", "--config", cfg, "--seed", "2",
                     "--out", str(out)]) == 0

    def test_forbidden_construct_rejected(self, tmp_path, capsys):
        cfg_obj = json.loads(json.dumps(SMALL_ANDERSON))
        cfg_obj["coefficients"]["drift"] = "__import__('os').system('true')"
        cfg = write_config(tmp_path, cfg_obj)
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
        assert "drift" in capsys.readouterr().err

    def test_division_rejected(self, tmp_path, capsys):
        cfg_obj = json.loads(json.dumps(SMALL_ANDERSON))
        cfg_obj["coefficients"]["drift"] = "y / 2"
        cfg = write_config(tmp_path, cfg_obj)
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
        assert "drift" in capsys.readouterr().err
