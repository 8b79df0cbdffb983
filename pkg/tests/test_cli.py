import numpy as np
import pytest

from liftwave import cli, media, validation

SMALL_CONFIG = """\
[problem]
config = A
p_plus_z = 1.0
p_minus_z = 1.4142135623730951
rho_plus = constant 1.0
rho_minus = constant 2.0
omega_re = 1.0
omega_im = 0.25

[discretization]
h = 0.25
n_s = 4
n_k = 8
n_cells = 2
mirror = on
threads = 2

[output]
x0 = -0.8
x1 = 0.8
z0 = -0.8
z1 = 0.8
nx = 7
nz = 7
outdir = {outdir}
"""


class TestParser:
    def test_sections_and_keys(self):
        cfg = cli.parse_config("[a]\nx = 1\n# note\n[b]\ny = two words\n")
        assert cfg == {"a": {"x": "1"}, "b": {"y": "two words"}}

    def test_error_carries_line_number(self):
        with pytest.raises(cli.ConfigError, match="line 3"):
            cli.parse_config("[a]\nx = 1\nbroken line\n")

    def test_key_outside_section(self):
        with pytest.raises(cli.ConfigError, match="outside"):
            cli.parse_config("x = 1\n")

    def test_field_specs(self):
        f = cli._parse_field("bump-grid 0.5 1.0 4.0 1.4142", "t")
        assert f.family == "bump-grid" and f.period_z == pytest.approx(1.4142)
        with pytest.raises(cli.ConfigError):
            cli._parse_field("mystery 1", "t")

    def test_problem_validation(self):
        sections = cli.parse_config(SMALL_CONFIG.format(outdir="x"))
        sections["problem"]["omega_im"] = "-1"
        with pytest.raises(cli.ConfigError, match="omega_im"):
            cli.build_problem(sections)
        sections = cli.parse_config(SMALL_CONFIG.format(outdir="x"))
        sections["discretization"]["n_k"] = "7"
        with pytest.raises(cli.ConfigError, match="n_k"):
            cli.build_problem(sections)


class TestSolve:
    def test_solve_writes_outputs_and_reruns_bitwise(self, tmp_path):
        cfg_path = tmp_path / "run.cfg"
        out1 = tmp_path / "out1"
        cfg_path.write_text(SMALL_CONFIG.format(outdir=out1))
        assert cli.main(["solve", "--config", str(cfg_path)]) == 0
        csv1 = (out1 / "u.csv").read_bytes()
        assert csv1.startswith(b"x,z,re,im")
        manifest = out1 / "manifest"
        assert manifest.exists()

        out2 = tmp_path / "out2"
        assert cli.main(["solve", "--config", str(manifest), "--out", str(out2)]) == 0
        assert (out2 / "u.csv").read_bytes() == csv1

    def test_zero_jump_all_zero_field(self, tmp_path):
        cfg = SMALL_CONFIG.format(outdir=tmp_path / "o") + "\n"
        cfg = cfg.replace("[discretization]", "jump_amplitude = 0.0\n\n[discretization]")
        p = tmp_path / "z.cfg"
        p.write_text(cfg)
        assert cli.main(["solve", "--config", str(p)]) == 0
        data = np.loadtxt(tmp_path / "o" / "u.csv", delimiter=",", skiprows=1)
        assert np.abs(data[:, 2:]).max() == 0.0

    def test_window_beyond_cells_rejected(self, tmp_path):
        cfg = SMALL_CONFIG.format(outdir=tmp_path / "o").replace("x1 = 0.8", "x1 = 5.0")
        p = tmp_path / "w.cfg"
        p.write_text(cfg)
        assert cli.main(["solve", "--config", str(p)]) == 1

    def test_parse_error_exit_code(self, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text("[problem\nconfig = A\n")
        assert cli.main(["solve", "--config", str(p)]) == 1


class TestValidate:
    def test_exit_codes_and_report(self, tmp_path, monkeypatch):
        rows = [{"h": 0.1, "eps0": 0.01, "eps1": 0.02, "runtime_s": 0.0}]
        monkeypatch.setitem(
            validation.CASES, "fake-pass", lambda: validation.CaseResult("fake-pass", True, rows)
        )
        monkeypatch.setitem(
            validation.CASES, "fake-fail", lambda: validation.CaseResult("fake-fail", False, rows)
        )
        assert cli.main(["validate", "fake-pass", "--out", str(tmp_path)]) == 0
        assert (tmp_path / "validate_fake-pass.csv").exists()
        assert cli.main(["validate", "fake-fail", "--out", str(tmp_path)]) == 2

    def test_unknown_case(self):
        assert cli.main(["validate", "does-not-exist"]) == 1
