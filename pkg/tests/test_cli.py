import json

import numpy as np
import pytest

from inoue_flow.cli import RunConfig, build_parser, load_config, main
from inoue_flow.errors import ConfigError


def write_config(tmp_path, **kw):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(kw))
    return str(path)


def run(tmp_path, command, *extra, **cfg):
    out = tmp_path / "out"
    args = [command, "--out", str(out)]
    if cfg:
        args += ["--config", write_config(tmp_path, **cfg)]
    return main(args + list(extra)), out


class TestConfig:
    def test_defaults(self):
        cfg = load_config()
        assert cfg.family == "SM" and cfg.n_torus == 16 and cfg.n_y2 == 17

    def test_unknown_key(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(write_config(tmp_path, colour="red"))

    @pytest.mark.parametrize("bad", [{"n_torus": 12}, {"n_y2": 16}, {"dt": 0},
                                     {"solver_tol": -1}, {"family": "Hopf"},
                                     {"metric": {"recipe": "magic"}}])
    def test_invalid(self, tmp_path, bad):
        with pytest.raises(ConfigError):
            load_config(write_config(tmp_path, **bad))

    def test_overrides(self):
        cfg = load_config(None, {"seed": 7, "n_torus": 8, "n_y2": None})
        assert cfg.seed == 7 and cfg.n_torus == 8 and cfg.n_y2 == 17

    def test_parser_flags(self):
        args = build_parser().parse_args(["flow", "--config", "c.json", "--out", "o", "--seed", "3",
                                          "--resolution", "8", "--tmax", "2", "--dt", "0.01"])
        assert (args.command, args.seed, args.resolution, args.tmax, args.dt) == ("flow", 3, 8, 2.0, 0.01)

    def test_missing_file(self, tmp_path):
        assert main(["surface", "--config", str(tmp_path / "nope.json")]) == 2


class TestSurface:
    def test_companion(self, tmp_path):
        code, out = run(tmp_path, "surface")
        assert code == 0
        text = (out / "surface_report.txt").read_text()
        fields = dict(line.split(" = ", 1) for line in text.splitlines())
        assert float(fields["lambda"]) == pytest.approx(1.324718, abs=1e-6)
        assert float(fields["kernel_residual"]) <= 1e-10

    def test_identity(self, tmp_path, capsys):
        code, _ = run(tmp_path, "surface", matrix=np.eye(3, dtype=int).tolist())
        assert code == 2
        assert "NoInoueSpectrum" in capsys.readouterr().err

    def test_r_zero(self, tmp_path, capsys):
        code, _ = run(tmp_path, "surface", family="SPlus", matrix=[[2, 1], [1, 1]], r=0)
        assert code == 2
        assert "InvalidR" in capsys.readouterr().err

    def test_splus(self, tmp_path):
        code, out = run(tmp_path, "surface", family="SPlus", matrix=[[2, 1], [1, 1]],
                        t_param=[0.3, 0.2])
        assert code == 0
        assert "gamma = 2.61803398874989" in (out / "surface_report.txt").read_text()


class TestGauduchon:
    def test_tv(self, tmp_path):
        code, out = run(tmp_path, "check-gauduchon", n_torus=8, n_y2=9)
        assert code == 0
        text = (out / "obstruction.txt").read_text()
        spread = float(text.splitlines()[0].split("=")[1])
        assert spread <= 1e-12 and "verdict = pass" in text
        assert (out / "obstruction.csv").read_text().startswith("y2,R,G_fiber_integral")

    def test_potential(self, tmp_path):
        code, out = run(tmp_path, "check-gauduchon", n_torus=8, n_y2=9,
                        metric={"recipe": "tv_plus_potential", "amplitude": 0.2})
        assert code == 0
        spread = float((out / "obstruction.txt").read_text().splitlines()[0].split("=")[1])
        assert spread <= 1e-8

    def test_mode_list(self, tmp_path):
        modes = [{"k": [1, 0, 0], "amp": 1e-4, "phase": 0.0}, {"k": [0, 1, -1], "amp": 5e-5, "phase": 1.0}]
        code, _ = run(tmp_path, "check-gauduchon", n_torus=8, n_y2=9,
                      metric={"recipe": "tv_plus_potential", "modes": modes})
        assert code == 0

    def test_nonconstant_r(self, tmp_path, capsys):
        code, out = run(tmp_path, "check-gauduchon", n_torus=8, n_y2=9,
                        metric={"recipe": "nonconstant_r"})
        assert code == 4
        err = capsys.readouterr().err
        pairing = float(err.split("pairing = ")[1])
        assert pairing < 0
        assert "verdict = fail" in (out / "obstruction.txt").read_text()

    def test_custom(self, tmp_path):
        code, _ = run(tmp_path, "check-gauduchon", n_torus=8, n_y2=9,
                      metric={"recipe": "custom", "r": "2 + cos(2*pi*logy2/log(1.324717957244746))",
                              "s": "1", "u": "0"})
        assert code == 4

    def test_custom_rejects_code(self, tmp_path):
        code, _ = run(tmp_path, "check-gauduchon", n_torus=8, n_y2=9,
                      metric={"recipe": "custom", "r": "__import__('os').getcwd()", "s": "1", "u": "0"})
        assert code == 2


class TestSolve:
    def test_gauduchon_input(self, tmp_path):
        code, out = run(tmp_path, "solve-slf", metric={"recipe": "tv_plus_potential"})
        assert code == 0
        fields = dict(line.split(" = ", 1) for line in (out / "solver_report.txt").read_text().splitlines())
        assert float(fields["slf_defect"]) <= 1e-6
        assert np.load(out / "potential.npy").shape == (16, 16, 16, 17)
        assert (out / "coefficients.csv").read_text().startswith("mode_norm,abs_coeff,divisor")

    def test_obstructed(self, tmp_path, capsys):
        code, out = run(tmp_path, "solve-slf", n_torus=8, n_y2=9, metric={"recipe": "nonconstant_r"})
        assert code == 4
        err = capsys.readouterr().err
        assert "ObstructionViolated" in err and "pairing" in err
        assert not (out / "potential.npy").exists()

    def test_tv_zero_potential(self, tmp_path):
        code, out = run(tmp_path, "solve-slf", n_torus=8, n_y2=9)
        assert code == 0
        assert np.all(np.load(out / "potential.npy") == 0)


class TestFlow:
    def test_tv(self, tmp_path):
        code, out = run(tmp_path, "flow", "--tmax", "5", "--dt", "0.01", n_torus=8, n_y2=9)
        assert code == 0
        summary = dict(line.split(" = ") for line in (out / "flow_summary.txt").read_text().splitlines())
        assert 0.8 <= float(summary["decay_rate_fit"]) <= 1.2
        assert float(summary["curvature_ratio_t_ge_0.5"]) <= 10
        assert (out / "plot_data" / "curvature_sup.dat").exists()

    def test_dt_too_large(self, tmp_path, capsys):
        code, _ = run(tmp_path, "flow", "--dt", "5", n_torus=8, n_y2=9)
        assert code == 3
        assert "StepTooLarge" in capsys.readouterr().err

    def test_reproducible(self, tmp_path):
        metric = {"recipe": "tv_plus_potential", "amplitude": 0.05, "kmax": 1}
        texts = []
        for i in range(2):
            d = tmp_path / f"r{i}"
            d.mkdir()
            code, out = run(d, "flow", "--tmax", "0.3", "--dt", "0.01", "--seed", "11",
                            n_torus=4, n_y2=5, metric=metric)
            assert code == 0
            texts.append((out / "flow_trace.csv").read_bytes())
        assert texts[0] == texts[1]


def test_report(tmp_path):
    code, out = run(tmp_path, "report", "--tmax", "1", "--dt", "0.01", n_torus=8, n_y2=9)
    assert code == 0
    text = (out / "run_report.txt").read_text()
    for section in ("[config]", "[surface_report]", "[obstruction_report]", "[solver_report]",
                    "[flow_summary]", "[timings_seconds]", "[checks]"):
        assert section in text
    assert "FAIL" not in text.split("[checks]")[1]


def test_report_records_failure(tmp_path):
    code, out = run(tmp_path, "report", "--tmax", "0.2", "--dt", "0.01", n_torus=8, n_y2=9,
                    metric={"recipe": "nonconstant_r"})
    assert code == 4
    assert "[errors]" in (out / "run_report.txt").read_text()


def test_config_roundtrip():
    cfg = RunConfig()
    assert RunConfig.from_dict(json.loads(json.dumps(cfg.__dict__))) == cfg
