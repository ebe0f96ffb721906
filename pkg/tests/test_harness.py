import json
import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conelab.errors import DomainError
from conelab.harness import COMMANDS, ConfigError, fit_loglog, main, parse_config, run

TORUS = {"kind": "torus", "params": {"radii": [1.0, 1.0]}, "n": 3, "a": 0.0}


def write_config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


class TestFit:
    def test_exact_power(self):
        x = np.geomspace(0.1, 100.0, 9)
        fit = fit_loglog(zip(x, x ** 2))
        assert fit.slope == pytest.approx(2.0, abs=1e-12)
        assert fit.max_residual <= 1e-12

    def test_synthetic_noise(self):
        x = np.geomspace(1.0, 1e3, 40)
        y = 3 * x ** -1.5 * (1 + 0.01 * np.sin(np.log(x)))
        fit = fit_loglog(zip(x, y))
        assert fit.slope == pytest.approx(-1.5, abs=0.02)
        assert math.exp(fit.intercept) == pytest.approx(3.0, rel=0.02)

    @pytest.mark.parametrize(
        "samples",
        [
            [(1.0, 1.0)] * 6,
            [(1.0, 1.0), (2.0, 1.0), (3.0, 1.0), (4.0, 1.0)],
            [(1.0, 1.0), (2.0, 1.0), (2.0, 3.0), (4.0, 1.0), (5.0, 1.0)],
            [(1.0, 1.0), (2.0, 0.0), (3.0, 1.0), (4.0, 1.0), (5.0, 1.0)],
        ],
    )
    def test_rejected(self, samples):
        with pytest.raises(DomainError):
            fit_loglog(samples)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(-4.0, 4.0), st.floats(0.01, 100.0))
    def test_recovers_power(self, p, c):
        x = np.geomspace(0.5, 50.0, 7)
        assert fit_loglog(zip(x, c * x ** p)).slope == pytest.approx(p, abs=1e-9)


class TestConfig:
    def test_defaults(self):
        cfg = parse_config({"model": TORUS})
        assert cfg.model.nu0 == 0.5
        assert cfg.scan["r_samples"] == [0.25, 0.5, 1.0, 2.0, 4.0]
        assert cfg.tolerances["slope_tol"] == 0.15
        assert cfg.hypothesis["rconj_ok"] is True

    def test_field_diagnostics(self):
        doc = {
            "model": {"kind": "torus", "params": {"radii": [1, 1], "colour": 1}, "n": 3},
            "scan": {"t_samples": "fast", "bogus": 1},
            "tolerances": {"kernel_tol": -1},
            "seed": -3,
            "extra": True,
        }
        with pytest.raises(ConfigError) as exc:
            parse_config(doc)
        text = "\n".join(exc.value.problems)
        for field in ("extra", "model.params.colour", "scan.bogus", "scan.t_samples",
                      "tolerances.kernel_tol", "seed"):
            assert field in text

    def test_unknown_kind(self):
        with pytest.raises(ConfigError, match="model.kind"):
            parse_config({"model": {"kind": "klein", "n": 3}})

    def test_hypothesis_violation(self):
        with pytest.raises(ConfigError, match="P not positive"):
            parse_config({"model": dict(TORUS, a=-1.0)})

    def test_nu0_alternative(self):
        cfg = parse_config({"model": {"kind": "torus", "params": {"radii": [1, 1]}, "n": 3, "nu0": 0.75}})
        assert cfg.model.nu0 == pytest.approx(0.75)
        with pytest.raises(ConfigError, match="either a or nu0"):
            parse_config({"model": dict(TORUS, nu0=0.75)})

    def test_hash_stable(self):
        assert parse_config({"model": TORUS, "seed": 2}).config_hash == parse_config({"seed": 2, "model": TORUS}).config_hash
        assert parse_config({"model": TORUS, "seed": 2}).config_hash != parse_config({"model": TORUS}).config_hash


class TestCommands:
    def test_check_hypothesis_sphere(self, tmp_path):
        cfg = parse_config({"model": {"kind": "sphere", "params": {"dim": 2, "sigma": 1.5}, "n": 3}})
        assert run("check-hypothesis", cfg, tmp_path) == 0
        summary = json.loads((tmp_path / "check-hypothesis.summary.json").read_text())
        assert summary["rconj_ok"] is True

    def test_outside_hypotheses_flagged(self, tmp_path):
        cfg = parse_config({"model": {"kind": "sphere", "params": {"dim": 2, "sigma": 0.9}, "n": 3}})
        with pytest.warns(UserWarning, match="outside the theorem"):
            run("spectrum", cfg, tmp_path)
        summary = json.loads((tmp_path / "spectrum.summary.json").read_text())
        assert summary["verdict_scope"] == "outside theorem hypotheses"

    def test_weber_default_suite(self, tmp_path):
        cfg = parse_config({"model": TORUS})
        assert run("weber", cfg, tmp_path) == 0
        lines = (tmp_path / "weber.csv").read_text().splitlines()
        assert len(lines) == 1 + 4 * 3 * 3 * 9  # ordered (r1, r2) pairs

    def test_schrodinger_single_t_rejected(self, tmp_path):
        path = write_config(tmp_path, {"model": TORUS, "scan": {"t_samples": [1.0], "n_y_pairs": 1}})
        assert main(["schrodinger-decay", "--config", path, "--out", str(tmp_path / "o")]) == 2

    def test_ratio_column(self, tmp_path):
        cfg = parse_config({"model": TORUS, "scan": {"t_samples": [0.5, 1, 2, 4, 8], "r_samples": [0.5, 1.0],
                                                     "n_y_pairs": 2}})
        run("schrodinger-decay", cfg, tmp_path)
        lines = (tmp_path / "schrodinger-decay.csv").read_text().splitlines()
        assert lines[0] == "t,r1,r2,ypair_id,z,kernel_abs,bound,ratio"
        for line in lines[1:]:
            t, r1, r2, pid, z, k, b, ratio = line.split(",")
            assert float(ratio) == pytest.approx(float(k) / float(b), rel=1e-12)
            assert float(z) == pytest.approx(float(r1) * float(r2) / (2 * float(t)), rel=1e-15)

    def test_deterministic_across_threads(self, tmp_path, monkeypatch):
        doc = {"model": TORUS, "scan": {"s_samples": [0.2, 0.5, 1, 2, 4, 8, 11, 15, 20, 28], "n_y_pairs": 3}, "seed": 7}
        cfg = parse_config(doc)
        monkeypatch.setenv("CONELAB_THREADS", "1")
        run("poisson-decay", cfg, tmp_path / "a")
        monkeypatch.setenv("CONELAB_THREADS", "4")
        run("poisson-decay", cfg, tmp_path / "b")
        assert (tmp_path / "a/poisson-decay.csv").read_bytes() == (tmp_path / "b/poisson-decay.csv").read_bytes()
        sa = json.loads((tmp_path / "a/poisson-decay.summary.json").read_text())
        sb = json.loads((tmp_path / "b/poisson-decay.summary.json").read_text())
        assert sa == sb

    def test_bad_thread_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("CONELAB_THREADS", "many")
        path = write_config(tmp_path, {"model": TORUS, "scan": {"n_y_pairs": 3}})
        assert main(["poisson-decay", "--config", path, "--out", str(tmp_path / "o")]) == 2

    def test_report(self, tmp_path):
        cfg = parse_config({"model": TORUS, "scan": {"commands": ["check-hypothesis", "distance-spectrum"]}})
        assert run("report", cfg, tmp_path) == 0
        index = json.loads((tmp_path / "report.json").read_text())
        assert set(index) == {"check-hypothesis", "distance-spectrum"}
        meta = json.loads((tmp_path / "check-hypothesis.meta.json").read_text())
        assert meta["config_hash"] == cfg.config_hash and "timestamp" in meta

    def test_report_unknown_command(self, tmp_path):
        cfg = parse_config({"model": TORUS, "scan": {"commands": ["nope"]}})
        with pytest.raises(ConfigError):
            run("report", cfg, tmp_path)

    def test_command_table(self):
        assert set(COMMANDS) == {
            "spectrum", "check-hypothesis", "distance-spectrum", "weber", "hankel", "heat",
            "schrodinger-decay", "halfwave-decay", "poisson-decay", "bernstein", "square", "besov",
        }


class TestCli:
    def test_invalid_config_exit(self, tmp_path, capsys):
        path = write_config(tmp_path, {"model": TORUS, "scan": {"bogus": 1}})
        assert main(["spectrum", "--config", path, "--out", str(tmp_path / "o")]) == 2
        assert "scan.bogus: unknown key" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["spectrum", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == 2

    def test_console_entry(self, tmp_path):
        path = write_config(tmp_path, {"model": TORUS})
        out = tmp_path / "o"
        proc = subprocess.run([sys.executable, "-m", "conelab", "spectrum", "--config", path, "--out", str(out)],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert "spectrum: PASS" in proc.stdout
        assert (out / "spectrum.csv").exists()

    def test_failing_verdict_exit(self, tmp_path):
        # an impossible Weyl tolerance turns the verdict into FAIL
        path = write_config(tmp_path, {"model": TORUS, "tolerances": {"weyl_tol": 1e-9}})
        assert main(["spectrum", "--config", path, "--out", str(tmp_path / "o")]) == 1
