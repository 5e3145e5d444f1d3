"""CLI behavior: tables, file outputs, config merging, exit codes."""
import json

import pytest
from click.testing import CliRunner

from atlaslab.cli import main


@pytest.fixture()
def runner():
    return CliRunner()


class TestStefanCommand:
    def test_table_prints_constants(self, runner):
        res = runner.invoke(main, ["stefan", "-l", "1", "-l", "2"])
        assert res.exit_code == 0
        assert "0.612003180962" in res.output
        assert "2.000000000000" in res.output

    def test_profile_csvs_written(self, runner, tmp_path):
        res = runner.invoke(main, [
            "stefan", "-l", "2", "--x-grid", "0.5:2.0:4",
            "--out", str(tmp_path)])
        assert res.exit_code == 0
        table = (tmp_path / "stefan-table.csv").read_text()
        assert table.splitlines()[1] == "lam,kappa,c1,c2,front"
        prof = (tmp_path / "stefan-profile-lam2.csv").read_text()
        assert prof.splitlines()[2] == "x,value"
        assert "0.5,2.0" in prof


class TestFdSolveCommand:
    def test_summary_and_files(self, runner, tmp_path):
        res = runner.invoke(main, [
            "fd-solve", "--lam", "2", "--dxi", "0.05", "--out", str(tmp_path)])
        assert res.exit_code == 0
        assert "kappa_boot=0.0000000000" in res.output
        front = (tmp_path / "fd-front-lam2.csv").read_text()
        assert front.splitlines()[3] == "t,y"
        assert (tmp_path / "fd-profile-lam2.csv").exists()


class TestSimulateCommand:
    def test_trajectory_and_state_files(self, runner, tmp_path):
        res = runner.invoke(main, [
            "simulate", "--lam", "2", "--n", "50", "--dt", "0.01",
            "-T", "0.5", "--seed", "3", "--sample-times", "0.25,0.5",
            "--quantiles", "0.5", "--state", "--out", str(tmp_path)])
        assert res.exit_code == 0
        assert "drift_total=0.500000" in res.output
        traj = (tmp_path / "trajectory.csv").read_text().splitlines()
        assert traj[4] == "t,leftmost,q0.5"
        assert len(traj) == 7  # 4 meta + header + 2 samples
        state = (tmp_path / "state.csv").read_text().splitlines()
        assert state[3] == "rank,position"
        assert len(state) == 4 + 50

    def test_core_validation_surfaces_as_exit_2(self, runner):
        res = runner.invoke(main, [
            "simulate", "--lam", "1", "--n", "10", "--dt", "0.01",
            "-T", "0.5", "--engine", "windowed", "--gamma", "1,0.5"])
        assert res.exit_code == 2
        assert "windowed engine" in res.output


class TestVerifyCommand:
    def test_pass_path_writes_report(self, runner, tmp_path):
        res = runner.invoke(main, [
            "verify", "domination", "-l", "1", "--replicas", "20",
            "--n", "80", "--dt", "0.02", "--fmt", "csv",
            "--out", str(tmp_path)])
        assert res.exit_code == 0, res.output
        assert res.output.count("[PASS]") == 6
        assert "all claims passed" in res.output
        written = list(tmp_path.glob("report-domination-*.csv"))
        assert len(written) == 1

    def test_failed_claims_exit_1(self, runner, tmp_path):
        res = runner.invoke(main, [
            "verify", "quantile-law", "-l", "2", "--b", "0.1", "--n", "400",
            "--replicas", "4", "--seed", "11", "--out", str(tmp_path)])
        assert res.exit_code == 1
        assert "[FAIL]" in res.output

    def test_truncation_exits_2(self, runner, tmp_path):
        res = runner.invoke(main, [
            "verify", "leftmost-scaling", "-l", "1", "--n", "50", "--b", "0.1",
            "--replicas", "2", "--out", str(tmp_path)])
        assert res.exit_code == 2
        assert "sizing rule" in res.output

    def test_unknown_tag_is_usage_error(self, runner):
        res = runner.invoke(main, ["verify", "warp-speed"])
        assert res.exit_code == 2


class TestConfigFileAndEnv:
    def test_config_file_supplies_defaults_flags_override(self, runner, tmp_path):
        cfg = tmp_path / "lab.yaml"
        cfg.write_text(
            "verify:\n  replicas: 20\n  n: 80\n  dt: 0.02\n"
            f"out_dir: {tmp_path / 'results'}\n")
        res = runner.invoke(main, [
            "--config", str(cfg), "verify", "domination", "-l", "1"])
        assert res.exit_code == 0, res.output
        assert (tmp_path / "results").is_dir()
        # flag wins over the config value: replicas=4 would change tolerance
        res2 = runner.invoke(main, [
            "--config", str(cfg), "verify", "domination", "-l", "1",
            "--replicas", "12", "--out", str(tmp_path / "r2")])
        assert res2.exit_code == 0, res2.output
        data = json.loads(next((tmp_path / "r2").glob("*.json")).read_text())
        assert data["config"]["replicas"] == 12

    def test_env_var_out_dir(self, runner, tmp_path, monkeypatch):
        monkeypatch.setenv("ATLASLAB_OUT", str(tmp_path / "envout"))
        res = runner.invoke(main, [
            "simulate", "--lam", "1", "--n", "20", "--dt", "0.01",
            "-T", "0.2", "--sample-times", "0.2"])
        assert res.exit_code == 0
        assert (tmp_path / "envout" / "trajectory.csv").exists()


class TestReportCommand:
    def test_rerender_json_to_markdown(self, runner, tmp_path):
        res = runner.invoke(main, [
            "verify", "spacings-equilibrium", "-l", "2", "--replicas", "4",
            "--n", "300", "--dt", "0.01", "--seed", "11",
            "--fmt", "json", "--out", str(tmp_path)])
        assert res.exit_code in (0, 1), res.output  # report written either way
        src = next(tmp_path.glob("report-*.json"))
        res2 = runner.invoke(main, [
            "report", "--input", str(src), "--fmt", "markdown",
            "--out", str(tmp_path)])
        assert res2.exit_code == 0, res2.output
        md = next(tmp_path.glob("report-*.md")).read_text()
        assert md.startswith("# Verification report: spacings-equilibrium")
