import json

import numpy as np
import pytest

from layercluster.config import (ConfigError, RunConfig, RunRecord,
                                 config_hash, parse_config, serialize_config)
from layercluster.report import ReportError, emit_report, rate_fit

GOOD = """
kind = "predict"
n_layers = 2
eps = [0.02, 0.01]

[curve]
kind = "circle"
radius = 1.0

[potential]
kind = "constant"
value = 1.0

[solver]
n_z = 64
"""


class TestParsing:
    def test_round_trip_is_idempotent(self):
        cfg = parse_config(GOOD)
        text = serialize_config(cfg)
        cfg2 = parse_config(text)
        assert serialize_config(cfg2) == text
        assert config_hash(cfg) == config_hash(cfg2)

    def test_defaults_filled(self):
        cfg = parse_config('kind = "predict"\nn_layers = 1\neps = [0.01]\n')
        assert cfg.curve["kind"] == "circle"
        assert cfg.potential["kind"] == "constant"
        assert cfg.out_dir == "runs"

    def test_unknown_top_key(self):
        with pytest.raises(ConfigError, match="tolerence: unknown key"):
            parse_config(GOOD + "\ntolerence = 1e-8\n")

    def test_unknown_table_key(self):
        with pytest.raises(ConfigError, match=r"solver\.nz: unknown key"):
            parse_config(GOOD.replace("n_z = 64", "nz = 64"))

    def test_missing_required_key(self):
        with pytest.raises(ConfigError, match="eps: required key missing"):
            parse_config('kind = "predict"\nn_layers = 1\n')

    def test_invalid_toml(self):
        with pytest.raises(ConfigError, match="not valid TOML"):
            parse_config("kind = predict\n")

    def test_unknown_kind(self):
        with pytest.raises(ConfigError, match="kind"):
            RunConfig(kind="sovle-radial", n_layers=1, eps=[0.01])

    def test_eps_must_descend(self):
        with pytest.raises(ConfigError, match="descending"):
            RunConfig(kind="predict", n_layers=1, eps=[0.01, 0.02])

    def test_eps_must_be_positive(self):
        with pytest.raises(ConfigError, match="positive"):
            RunConfig(kind="predict", n_layers=1, eps=[0.01, -0.02])

    def test_solver_values_validated(self):
        with pytest.raises(ConfigError, match=r"solver\.n_z"):
            RunConfig(kind="predict", n_layers=1, eps=[0.01],
                      solver={"n_z": 0})
        with pytest.raises(ConfigError, match=r"solver\.delta0"):
            RunConfig(kind="predict", n_layers=1, eps=[0.01],
                      solver={"delta0": -0.1})


class TestHashing:
    def test_hash_ignores_key_order(self):
        reordered = GOOD.replace('kind = "predict"\nn_layers = 2',
                                 'n_layers = 2\nkind = "predict"')
        assert config_hash(parse_config(GOOD)) \
            == config_hash(parse_config(reordered))

    def test_hash_sensitive_to_values(self):
        a = parse_config(GOOD)
        b = parse_config(GOOD.replace("n_z = 64", "n_z = 128"))
        assert config_hash(a) != config_hash(b)

    def test_hash_is_hex16(self):
        h = config_hash(parse_config(GOOD))
        assert len(h) == 16
        int(h, 16)


class TestRunRecord:
    def test_json_round_trip(self):
        rec = RunRecord(config_hash="abc", kind="predict",
                        results=[{"eps": 0.01}], timings={"total_s": 1.0},
                        artifacts=["placement.csv"], version="0.1.0")
        d = json.loads(json.dumps(rec.to_dict()))
        assert RunRecord(**d) == rec


class TestReport:
    def test_rate_fit_recovers_slope(self):
        eps = np.array([0.02, 0.01, 0.005, 0.0025])
        slope, ci = rate_fit(eps, 3.0 * eps**2)
        assert slope == pytest.approx(2.0, abs=1e-10)
        assert ci == pytest.approx(0.0, abs=1e-8)

    def test_empty_records_rejected(self):
        with pytest.raises(ReportError):
            emit_report([])

    def test_failing_check_named(self):
        rec = RunRecord(config_hash="h", kind="verify", results=[{
            "checks": [{"name": "spacing law", "measured": 0.5,
                        "required": "<= 0.2", "passed": False}]}])
        text, summary = emit_report([rec])
        assert "FAIL spacing law" in text
        assert "FAILURES present" in text
        assert summary["all_passed"] is False

    def test_not_run_marker(self):
        rec = RunRecord(config_hash="h", kind="predict",
                        results=[{"eps": 0.01, "f_pred_mean": [2.0]}])
        text, summary = emit_report([rec])
        assert "PDE delta section: not run" in text
        assert summary["runs"][0]["pde_section"] == "not run"
        assert summary["all_passed"] is True

    def test_rate_section_from_pde_results(self):
        rec = RunRecord(config_hash="h", kind="solve-radial", results=[
            {"eps": 0.02, "rel_delta_max": 0.02},
            {"eps": 0.01, "rel_delta_max": 0.01}])
        text, summary = emit_report([rec])
        assert summary["runs"][0]["pde_section"] == "run"
        assert summary["runs"][0]["rate_fit"]["slope"] \
            == pytest.approx(1.0, abs=1e-12)
        assert "convergence rate fit" in text
