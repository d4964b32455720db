"""Command-line front end: exit codes, error JSON, determinism."""
import filecmp
import json

import pytest

from thyrsim import cli


def run(capsys, *argv):
    code = cli.main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


BAD_SCENARIO = """\
name: broken
grid: {v_m: -5.0, f_hz: 50.0, source: stiff}
rectifier: {l_c: 2.7e-6}
load: {kind: electrolyzer}
control: {kind: pi}
"""

TINY_SCAN = """\
name: tiny
grid: {v_m: 120.0, f_hz: 50.0, source: stiff}
rectifier: {l_c: 2.7e-6}
load: {kind: current, i0: 1.0e+4}
control: {kind: constant, alpha_deg: 30.0}
study: {kind: scan_dc, f_min: 5.0, f_max: 50.0, n_points: 3, amplitude: 0.01}
"""


class TestErrorHandling:
    def test_malformed_config_exits_2_with_key_in_json(self, capsys, tmp_path):
        p = tmp_path / "broken.yaml"
        p.write_text(BAD_SCENARIO)
        code, _, err = run(capsys, "modes", "--scenario", str(p),
                           "--out", str(tmp_path))
        assert code == 2
        payload = json.loads(err)
        assert payload["error"] == "config"
        assert payload["key"] == "grid.v_m"

    def test_missing_scenario_file_exits_2(self, capsys, tmp_path):
        code, _, err = run(capsys, "modes", "--scenario", "/no/such.yaml",
                           "--out", str(tmp_path))
        assert code == 2
        assert json.loads(err)["error"] == "config"

    def test_wrong_study_kind_exits_2(self, capsys, tmp_path):
        code, _, err = run(capsys, "simulate", "--scenario", "fig7",
                           "--out", str(tmp_path))
        assert code == 2
        assert json.loads(err)["key"] == "study.kind"

    def test_switching_linearization_rejected(self, capsys, tmp_path):
        code, _, err = run(capsys, "modes", "--scenario", "default",
                           "--model", "switching", "--out", str(tmp_path))
        assert code == 2
        assert json.loads(err)["key"] == "model"


class TestStudies:
    def test_modes_reports_stable_default_scenario(self, capsys, tmp_path):
        code, _, _ = run(capsys, "modes", "--scenario", "default",
                         "--out", str(tmp_path))
        assert code == 0
        payload = json.loads((tmp_path / "default_modes_emt.json").read_text())
        assert payload["stable"] is True
        for mode in payload["modes"]:
            assert mode["lambda_re"] < 0.0

    def test_linearize_writes_square_state_space(self, capsys, tmp_path):
        code, _, _ = run(capsys, "linearize", "--scenario", "default",
                         "--model", "rms", "--out", str(tmp_path))
        assert code == 0
        payload = json.loads(
            (tmp_path / "default_linear_rms.json").read_text())
        n = len(payload["state_names"])
        assert len(payload["a"]) == n and len(payload["a"][0]) == n
        assert len(payload["eigenvalues"]) == n

    def test_simulate_single_model_writes_trajectory(self, capsys, tmp_path):
        code, _, _ = run(capsys, "simulate", "--scenario", "fig6",
                         "--model", "rms", "--out", str(tmp_path))
        assert code == 0
        header = (tmp_path / "fig6_sim_rms.csv").read_text().splitlines()[0]
        assert header.startswith("time [s]")
        assert "load.i_dc" in header

    def test_scan_dc_is_deterministic(self, capsys, tmp_path):
        p = tmp_path / "tiny.yaml"
        p.write_text(TINY_SCAN)
        for d in ("one", "two"):
            (tmp_path / d).mkdir()
            code, _, _ = run(capsys, "scan-dc", "--scenario", str(p),
                             "--model", "rms", "--out", str(tmp_path / d))
            assert code == 0
        assert filecmp.cmp(tmp_path / "one" / "tiny_Zout_rms.csv",
                           tmp_path / "two" / "tiny_Zout_rms.csv",
                           shallow=False)

    def test_sweep_reports_instability_crossing(self, capsys, tmp_path):
        code, _, _ = run(capsys, "sweep", "--scenario", "fig10a",
                         "--out", str(tmp_path))
        assert code == 0
        payload = json.loads(
            (tmp_path / "fig10a_sweep_emt.json").read_text())
        assert payload["all_stable"] is False
        assert payload["crossing"] is not None
        assert 0.01 < payload["crossing"] < 1.0


class TestCompare:
    def test_file_against_itself_passes_with_zero_deltas(self, capsys,
                                                         tmp_path):
        p = tmp_path / "tiny.yaml"
        p.write_text(TINY_SCAN)
        run(capsys, "scan-dc", "--scenario", str(p), "--model", "rms",
            "--out", str(tmp_path))
        bode = str(tmp_path / "tiny_Zout_rms.csv")
        code, out, _ = run(capsys, "compare", bode, bode)
        assert code == 0
        payload = json.loads(out)
        assert payload["passed"] is True
        assert payload["max_dmag_db"] == 0.0

    def test_mismatched_grids_exit_1(self, capsys, tmp_path):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        a.write_text("f_hz,mag_db,phase_deg,re,im\n1.0,0.0,0.0,1.0,0.0\n")
        b.write_text("f_hz,mag_db,phase_deg,re,im\n2.0,0.0,0.0,1.0,0.0\n")
        code, _, err = run(capsys, "compare", str(a), str(b))
        assert code == 1
        assert json.loads(err)["type"] == "GridMismatch"
