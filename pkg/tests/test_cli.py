import csv
import json
import math

import pytest
import yaml

from kernelmpc.cli import ConfigError, load_config, main

KERNEL_CFG = {
    "kernel": {"speed_range": [0.5, 10.0], "n_tangent_speeds": 6, "n_curve_samples": 12}
}
MPC_CFG = {"mpc": {"x0": [0.0, 1.0, 0.0, 0.0], "n_steps": 6, "dt": 1.0}}
HORIZON_CFG = {
    "horizon": {
        "states": [[0.0, 1.0, 0.0, 0.0]],
        "dt": 1.0,
        "conv_tol": 5e-3,
        "n_max": 16,
    }
}
PROBE_CFG = {
    "probe": {"states": [[0.0, 1.0, 0.0, 0.0]], "step_counts": [2, 4], "dt": 1.0}
}


def write_cfg(tmp_path, doc, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc))
    return str(path)


def run(tmp_path, command, doc, sub="out"):
    out = tmp_path / sub
    code = main([command, "--config", write_cfg(tmp_path, doc), "--out", str(out)])
    return code, out


class TestConfigLoading:
    def test_requires_exactly_one_source(self):
        with pytest.raises(ConfigError):
            load_config(None, None)
        with pytest.raises(ConfigError):
            load_config("a.yaml", "table1")

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            load_config(None, "table9")

    def test_bundled_presets_validate(self):
        for name in ("table1", "table2", "table3", "table4"):
            doc = load_config(None, name)
            assert doc["horizon"]["table"] == name

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / "nope.yaml"), None)

    def test_invalid_yaml(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("a: [unclosed")
        with pytest.raises(ConfigError):
            load_config(str(p), None)

    def test_unknown_key_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(write_cfg(tmp_path, {"mispelled": {}}), None)

    def test_wrong_type_rejected(self, tmp_path):
        doc = {"mpc": {"x0": [0, 0, 0], "n_steps": 6, "dt": 1.0}}  # 3-vector
        with pytest.raises(ConfigError):
            load_config(write_cfg(tmp_path, doc), None)


class TestExitCodes:
    def test_config_error_is_2(self, tmp_path):
        code, _ = run(tmp_path, "mpc", {"unknown_section": {}})
        assert code == 2

    def test_mpc_missing_section_is_2(self, tmp_path):
        code, _ = run(tmp_path, "mpc", {})
        assert code == 2

    def test_bad_speed_range_is_2(self, tmp_path):
        code, _ = run(tmp_path, "kernel", {"kernel": {"speed_range": [5.0, 1.0]}})
        assert code == 2

    def test_horizon_needs_table_xor_states(self, tmp_path):
        code, _ = run(tmp_path, "horizon", {})
        assert code == 2
        doc = {"horizon": {"table": "table1", "states": [[0, 0, 0, 0]], "dt": 1.0}}
        code, _ = run(tmp_path, "horizon", doc)
        assert code == 2

    def test_horizon_states_need_dt(self, tmp_path):
        code, _ = run(tmp_path, "horizon", {"horizon": {"states": [[0, 1, 0, 0]]}})
        assert code == 2

    def test_infeasible_loop_is_4(self, tmp_path):
        doc = {
            "mpc": {
                "x0": [0.5, 0.0, 0.0, 9.67],  # outside the viability kernel
                "n_steps": 2,
                "dt": 0.25,
                "sim_duration": 2.0,
            }
        }
        code, out = run(tmp_path, "mpc", doc)
        assert code == 4
        verdict = json.loads((out / "manifest.json").read_text())["verdict"]
        assert verdict["failure_step"] is not None

    def test_horizon_not_found_is_3(self, tmp_path):
        doc = {
            "horizon": {
                "states": [[0.0, 1.0, 0.0, 0.0]],
                "dt": 1.0,
                "conv_tol": 5e-3,
                "n_max": 2,
            }
        }
        code, out = run(tmp_path, "horizon", doc)
        assert code == 3
        rows = (out / "table.csv").read_text().splitlines()
        assert rows[-1].startswith("n_hat_quartic,") and rows[-1].endswith(",")


class TestKernelCommand:
    def test_outputs_and_manifest(self, tmp_path):
        code, out = run(tmp_path, "kernel", KERNEL_CFG)
        assert code == 0
        man = json.loads((out / "manifest.json").read_text())
        assert man["command"] == "kernel"
        assert set(man["outputs"]) == {"surface.csv", "kinks.csv"}
        assert len(man["config_sha256"]) == 64
        assert man["config"] == KERNEL_CFG

    def test_kink_rows_follow_affine_speed_law(self, tmp_path):
        code, out = run(tmp_path, "kernel", KERNEL_CFG)
        assert code == 0
        with (out / "kinks.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert {r["family"] for r in rows} == {"T1", "T2", "T3", "T4"}
        for r in rows:
            if r["family"] != "T1":
                continue
            v, x1 = float(r["x4"]), float(r["x1"])
            if v >= math.pi / 2:
                assert x1 == pytest.approx(1 - (v / 2 - math.pi / 4 + 0.5), abs=1e-9)

    def test_byte_identical_on_repeat(self, tmp_path):
        _, out1 = run(tmp_path, "kernel", KERNEL_CFG, sub="a")
        _, out2 = run(tmp_path, "kernel", KERNEL_CFG, sub="b")
        for name in ("surface.csv", "kinks.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


class TestMpcCommand:
    def test_converged_run_recorded(self, tmp_path):
        code, out = run(tmp_path, "mpc", MPC_CFG)
        assert code == 0
        with (out / "run.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert float(rows[0]["x2"]) == 1.0
        assert rows[-1]["u1"] == ""  # terminal row carries no input
        verdict = json.loads((out / "manifest.json").read_text())["verdict"]
        assert verdict["converged"] is True
        assert verdict["n_steps_simulated"] == len(rows) - 1


class TestHorizonCommand:
    def test_custom_state_table(self, tmp_path):
        code, out = run(tmp_path, "horizon", HORIZON_CFG)
        assert code == 0
        report = json.loads((out / "table_runs.json").read_text())
        assert report["table"] == "custom"
        (entry,) = report["entries"]
        assert 3 <= entry["n_hat"] <= 8
        assert entry["verdicts"][-1]["converged"] is True
        rows = (out / "table.csv").read_text().splitlines()
        assert rows[-1] == f"n_hat_quartic,{entry['n_hat']}"


class TestProbeCommand:
    def test_ratio_table(self, tmp_path):
        code, out = run(tmp_path, "probe", PROBE_CFG)
        assert code == 0
        with (out / "probe.csv").open() as fh:
            rows = list(csv.reader(fh))
        assert rows[0][4:] == ["ratio_T=2", "ratio_T=4"]
        assert float(rows[1][5]) >= float(rows[1][4]) - 1e-9

    def test_zero_cost_state_is_numeric_failure(self, tmp_path):
        doc = {"probe": {"states": [[0, 0, 0, 0]], "step_counts": [2], "dt": 1.0}}
        code, _ = run(tmp_path, "probe", doc)
        assert code == 3
