import json
import math

import numpy as np
import pytest

from solitonlab import __version__
from solitonlab.cli import ConfigError, RunConfig, build_config, main


def _run(tmp_path, *args, sub="out"):
    out = tmp_path / sub
    code = main([*args, "--out", str(out)])
    return code, out


def _csv(path):
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


class TestConfig:
    def test_defaults_recorded(self):
        cfg = build_config(None, {"n": 3})
        assert cfg.n == 3 and cfg.lam == 1.0
        assert "n" not in cfg.defaulted and "lam" in cfg.defaulted

    def test_flags_override_file(self):
        cfg = build_config({"n": 3, "lambda": 2}, {"n": 4})
        assert cfg.n == 4 and cfg.lam == 2.0

    @pytest.mark.parametrize(
        "values, key",
        [
            ({"lamda": 1.0}, "lamda"),
            ({"n": "two"}, "n"),
            ({"n": 1}, "n"),
            ({"lambda": -1.0}, "lambda"),
            ({"start": [1, 2]}, "start"),
            ({"rtol": 1e-20}, "rtol"),
            ({"delta": 0.5}, "delta"),
            ({"steady": 1}, "steady"),
            ({"t0": 1.0, "t1": 1.0}, "t1"),
        ],
    )
    def test_bad_values_name_key(self, values, key):
        with pytest.raises(ConfigError) as exc:
            build_config(values, {})
        assert exc.value.key == key

    def test_hash_ignores_output_dir(self):
        a = build_config(None, {"out": "a"})
        b = build_config(None, {"out": "b"})
        assert a.digest() == b.digest()
        assert a.digest() != build_config(None, {"n": 3}).digest()

    def test_round_trip_fields(self):
        assert set(RunConfig().resolved()) >= {"n", "lambda", "rtol", "atol", "seed"}


class TestExitCodes:
    def test_malformed_file(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"lamda": 2.0}))
        code, _ = _run(tmp_path, "integrate", "--config", str(cfg), "--start", "1", "0", "0")
        assert code == 2
        assert "'lamda'" in capsys.readouterr().err

    def test_invalid_json(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text("{not json")
        assert _run(tmp_path, "integrate", "--config", str(cfg))[0] == 2

    def test_missing_start(self, tmp_path, capsys):
        assert _run(tmp_path, "integrate")[0] == 2
        assert "'start'" in capsys.readouterr().err

    def test_small_n(self, tmp_path):
        assert _run(tmp_path, "integrate", "--n", "1", "--start", "1", "0", "0")[0] == 2

    def test_unwritable_out(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        code = main(["integrate", "--start", "1", "0", "0", "--out", str(blocker / "sub")])
        assert code == 2

    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2


class TestIntegrate:
    def test_cylinder_csv(self, tmp_path):
        code, out = _run(tmp_path, "integrate", "--start", "1", "0", "0", "--t1", "10")
        assert code == 0
        data = _csv(out / "trajectory.csv")
        assert (out / "trajectory.csv").read_text().splitlines()[0] == "t,omega,x,y,r,f"
        assert np.max(np.abs(data[:, 3] + data[:, 0])) < 1e-8

    def test_flat_csv(self, tmp_path):
        code, out = _run(tmp_path, "integrate", "--start", "1", "1", "1", "--t1", "3")
        data = _csv(out / "trajectory.csv")
        assert code == 0
        assert np.max(np.abs(data[:, 1] / np.exp(data[:, 0]) - 1)) < 1e-7

    def test_manifest(self, tmp_path):
        code, out = _run(tmp_path, "integrate", "--start", "1", "0", "0", "--n", "3", "--lambda", "2")
        m = json.loads((out / "manifest.json").read_text())
        assert m["version"] == __version__
        assert m["config"]["n"] == 3 and m["config"]["lambda"] == 2.0
        assert len(m["config_hash"]) == 64
        assert "rtol" in m["defaulted"] and "n" not in m["defaulted"]
        assert m["trajectory"]["termination"] == "HorizonReached"

    def test_byte_identical(self, tmp_path):
        args = ["integrate", "--start", "0.7", "0.3", "0.5", "--t1", "4"]
        _, a = _run(tmp_path, *args, sub="a")
        _, b = _run(tmp_path, *args, sub="b")
        assert (a / "trajectory.csv").read_bytes() == (b / "trajectory.csv").read_bytes()
        ma = json.loads((a / "manifest.json").read_text())
        mb = json.loads((b / "manifest.json").read_text())
        assert ma == mb

    def test_seeded_start(self, tmp_path):
        code, out = _run(tmp_path, "integrate", "--theta", "0.3", "--t1", "2")
        assert code == 0
        data = _csv(out / "trajectory.csv")
        assert data[0, 1] < 1e-5 and abs(data[0, 2] - 1) < 1e-5

    def test_gnuplot_layout(self, tmp_path):
        code, out = _run(tmp_path, "integrate", "--start", "1", "0", "0", "--t1", "1", "--gnuplot")
        lines = (out / "trajectory.csv").read_text().splitlines()
        assert lines[0] == "# t omega x y r f"
        assert np.loadtxt(out / "trajectory.csv").shape[1] == 6


class TestOtherCommands:
    def test_classify_cylinder(self, tmp_path, capsys):
        code, out = _run(tmp_path, "classify", "--start", "1", "0", "0")
        assert code == 0
        assert capsys.readouterr().out.strip() == "Cylinder"
        m = json.loads((out / "manifest.json").read_text())
        assert m["classification"]["tag"] == "Cylinder"

    def test_reconstruct(self, tmp_path):
        code, out = _run(
            tmp_path, "reconstruct", "--start", "1.4142135623730951", "0", "0",
            "--t0", "0", "--t1", "2", "--points", "201",
        )
        assert code == 0
        text = (out / "profile.csv").read_text().splitlines()
        assert text[0] == "r,omega,x,fprime,f,nu1,nu2,R,identity"
        data = _csv(out / "profile.csv")
        assert data.shape == (201, 9)
        assert np.max(np.abs(data[:, 5] - 0.5)) < 1e-6
        assert np.ptp(data[:, 8]) < 1e-5

    def test_reconstruct_rejects_zero_omega(self, tmp_path):
        assert _run(tmp_path, "reconstruct", "--start", "0", "0.5", "1", "--t1", "1")[0] == 3

    def test_sweep(self, tmp_path):
        code, out = _run(tmp_path, "sweep", "--count", "5", "--t1", "100")
        assert code == 0
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[0] == "theta,tag" and len(lines) == 6
        thetas = [float(line.split(",")[0]) for line in lines[1:]]
        assert thetas == sorted(thetas)

    def test_sweep_count_checked(self, tmp_path):
        assert _run(tmp_path, "sweep", "--count", "1")[0] == 2

    def test_bisect_bad_bracket(self, tmp_path):
        assert _run(tmp_path, "bisect", "--theta-range", "0", "1e-9", "--iters", "2")[0] == 2

    def test_verify_small(self, tmp_path, capsys):
        code, out = _run(tmp_path, "verify", "--samples", "4")
        report = json.loads((out / "verify.json").read_text())
        lines = capsys.readouterr().out.splitlines()
        assert code == 0 and report["passed"] is True
        assert len(lines) == len(report["checks"]) == 17
        assert all(line.startswith("PASS") for line in lines)
        assert report["config"]["seed"] == report["checks"][0]["seed"]

    def test_verify_failure_exit(self, tmp_path, monkeypatch):
        from solitonlab import cli
        from solitonlab.analyze import CheckReport

        monkeypatch.setattr(cli, "verify_suite", lambda *a, **k: [CheckReport("x", False)])
        assert _run(tmp_path, "verify")[0] == 1


def test_bisect_reports_ellipse_deviation(tmp_path, capsys):
    code, out = _run(tmp_path, "bisect")
    assert code == 0
    m = json.loads((out / "manifest.json").read_text())
    assert m["bisection"]["ellipse_deviation"] < 1e-3
    assert m["bisection"]["iterations"] <= 60
    assert "theta*" in capsys.readouterr().out
    assert math.isfinite(m["bisection"]["theta"])
