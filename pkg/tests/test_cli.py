import csv
import json
import math

import numpy as np
import pytest

from layercluster import cli
from layercluster.config import ConfigError, RunConfig

PREDICT_TOML = """\
kind = "predict"
n_layers = 2
eps = [0.01]

[solver]
n_z = 32
"""


def _read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


class TestBuilders:
    def test_curve_kinds(self):
        assert cli.build_curve({"kind": "circle", "radius": 2.0}).length \
            == pytest.approx(4.0 * math.pi, rel=1e-10)
        ell = cli.build_curve({"kind": "ellipse", "a": 1.5, "b": 1.0})
        assert ell.length > 2.0 * math.pi
        with pytest.raises(ConfigError, match="curve.kind"):
            cli.build_curve({"kind": "square"})

    def test_potential_kinds(self):
        pot = cli.build_potential({"kind": "constant", "value": 4.0})
        assert pot.eval_fn(np.array([[0.3, 0.1]]))[0] == 4.0
        rad = cli.build_potential({"kind": "radial", "value": 1.0,
                                   "slope": 0.5})
        assert rad.eval_fn(np.array([[0.5, 0.0]]))[0] \
            == pytest.approx(1.25)
        with pytest.raises(ConfigError, match="potential.kind"):
            cli.build_potential({"kind": "table"})


class TestPredictRun:
    def test_artifacts_and_values(self, tmp_path):
        cfg = RunConfig(kind="predict", n_layers=2, eps=[0.01],
                        solver={"n_z": 32})
        rec = cli.run_experiment(cfg, out_root=tmp_path)
        run_dir = tmp_path / rec.config_hash
        assert (run_dir / "config.toml").exists()
        assert (run_dir / "record.json").exists()
        header, rows = _read_csv(run_dir / "placement.csv")
        assert header == ["theta", "Hcal", "fdot_1", "fdot_2", "fbar_1",
                          "fbar_2", "f_1", "f_2", "spacing_1", "spacing_2"]
        assert len(rows) == 32
        f1 = float(rows[0][header.index("f_1")])
        s1 = float(rows[0][header.index("spacing_1")])
        assert s1 == pytest.approx(2.0 * f1, rel=1e-14)

    def test_rerun_is_bit_identical(self, tmp_path):
        cfg = RunConfig(kind="predict", n_layers=1, eps=[0.01],
                        solver={"n_z": 16})
        rec = cli.run_experiment(cfg, out_root=tmp_path)
        path = tmp_path / rec.config_hash / "placement.csv"
        first = path.read_bytes()
        cli.run_experiment(cfg, out_root=tmp_path)
        assert path.read_bytes() == first


class TestResonanceScanRun:
    def test_csv_and_flags(self, tmp_path):
        cfg = RunConfig(kind="resonance-scan", n_layers=1,
                        eps=[0.01, 0.004],
                        solver={"eps_scan_points": 60, "toda_modes": 64})
        rec = cli.run_experiment(cfg, out_root=tmp_path)
        header, rows = _read_csv(tmp_path / rec.config_hash
                                 / "resonance.csv")
        assert header == ["eps", "gap", "resonant", "nearest_analytic"]
        assert len(rows) == 60
        eps_col = np.array([float(r[0]) for r in rows])
        assert np.all(np.diff(eps_col) > 0)
        n_flagged = sum(int(r[2]) for r in rows)
        assert n_flagged == rec.results[0]["n_resonant"]
        assert 0 < n_flagged < 60


class TestTodaRun:
    def test_report_json(self, tmp_path):
        cfg = RunConfig(kind="toda", n_layers=2, eps=[0.0045],
                        solver={"toda_modes": 128})
        rec = cli.run_experiment(cfg, out_root=tmp_path)
        with open(tmp_path / rec.config_hash / "toda_solve.json") as fh:
            reports = json.load(fh)
        assert len(reports) == 1
        assert reports[0]["gap"] > 0
        assert rec.results[0]["ftilde_inf"] > 0


class TestRadialRun:
    def test_layers_and_warm_start(self, tmp_path):
        cfg = RunConfig(kind="solve-radial", n_layers=1, eps=[0.02])
        rec = cli.run_experiment(cfg, out_root=tmp_path)
        run_dir = tmp_path / rec.config_hash
        header, rows = _read_csv(run_dir / "layers.csv")
        assert header == ["theta", "j", "depth_measured", "depth_predicted",
                          "delta"]
        assert len(rows) == 1
        assert rec.results[0]["rel_delta_max"] < 0.05

        cold = cli.run_experiment(cfg, out_root=tmp_path / "cold")
        warm = cli.run_experiment(cfg, out_root=tmp_path / "warm",
                                  seed_from=run_dir)
        assert len(warm.results[0]["depths"]) == 1
        # Warm start reuses the converged field, so Newton needs no more
        # iterations than the ansatz-seeded solve.
        warm_tr = json.load(open(tmp_path / "warm" / warm.config_hash
                                 / "record.json"))
        assert warm.results[0]["residual"] < 1e-10
        assert warm_tr["results"][0]["depths"] \
            == pytest.approx(cold.results[0]["depths"], rel=1e-8)


class TestSweep:
    def test_parallel_matches_serial(self, tmp_path):
        cfgs = [RunConfig(kind="predict", n_layers=1, eps=[e],
                          solver={"n_z": 16}) for e in (0.02, 0.01)]
        serial = cli.run_sweep(cfgs, out_root=tmp_path / "s", jobs=1)
        parallel = cli.run_sweep(cfgs, out_root=tmp_path / "p", jobs=2)
        for a, b in zip(serial, parallel):
            assert a.config_hash == b.config_hash
            assert a.results == b.results


class TestMain:
    def test_predict_and_report(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.toml"
        cfg_path.write_text(PREDICT_TOML)
        out = tmp_path / "runs"
        assert cli.main(["predict", "--config", str(cfg_path),
                         "--out", str(out)]) == 0
        assert cli.main(["report", "--out", str(out)]) == 0
        assert (out / "report.md").exists()
        text = (out / "report.md").read_text()
        assert "PDE delta section: not run" in text

    def test_kind_mismatch_rejected(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.toml"
        cfg_path.write_text(PREDICT_TOML)
        assert cli.main(["toda-solve", "--config", str(cfg_path)]) == 2
        assert "does not match" in capsys.readouterr().err

    def test_bad_config_exit_code(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.toml"
        cfg_path.write_text("kind = 3\n")
        assert cli.main(["predict", "--config", str(cfg_path)]) == 2

    def test_report_without_records(self, tmp_path, capsys):
        assert cli.main(["report", "--out", str(tmp_path)]) == 2

    def test_verify_prints_check_lines(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.toml"
        cfg_path.write_text('kind = "verify"\nn_layers = 1\n'
                            'eps = [0.005]\n')
        code = cli.main(["verify", "--config", str(cfg_path),
                         "--out", str(tmp_path / "runs")])
        out = capsys.readouterr().out
        assert code == 0
        assert out.count("PASS") == 3
