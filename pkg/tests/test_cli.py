import json
from pathlib import Path

import pytest

from lossylqr.cli import main

SPECS = Path(__file__).resolve().parent.parent / "specs"
EX1 = str(SPECS / "example1.json")
EX2 = str(SPECS / "example2.json")


def run(capsys, *argv) -> tuple[int, str, str]:
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def run_json(capsys, *argv) -> dict:
    code, out, err = run(capsys, *argv)
    assert code == 0, err
    return json.loads(out)


class TestGoldenRuns:
    def test_certify_example2(self, capsys):
        doc = run_json(capsys, "certify", "--spec", EX2, "--qhat", "0.1633", "--n", "300", "--beta", "0.01")
        result = doc["result"]
        assert result["q_bar"] == pytest.approx(0.4181, abs=2e-3)
        assert result["delta"] == pytest.approx(0.0940, abs=1e-4)
        assert result["passed"] is True

    def test_threshold_fixed_point(self, capsys):
        doc = run_json(capsys, "threshold", "--spec", EX1, "--variant", "scalar", "--fixed-point")
        assert doc["result"]["safe_q"] == pytest.approx(0.231, abs=2e-3)

    def test_solve_example1(self, capsys):
        doc = run_json(capsys, "solve", "--spec", EX1, "--q", "0.2")
        assert doc["result"]["P"][0][0] == pytest.approx(4.49537, abs=5e-6)
        assert doc["result"]["residual"] <= 1e-10

    def test_qc_example2(self, capsys):
        doc = run_json(capsys, "qc", "--spec", EX2)
        assert doc["result"]["exact"] == pytest.approx(4.0 / 9.0, rel=1e-12)
        assert doc["result"]["method"] == "invertible_B"

    def test_synth_example1(self, capsys):
        doc = run_json(capsys, "synth", "--spec", EX1, "--qhat", "0")
        assert doc["result"]["K"][0][0] == pytest.approx(-1.08680, abs=5e-6)

    def test_check_exact(self, capsys):
        doc = run_json(capsys, "check", "--spec", EX1, "--q", "0.4", "--qhat", "0", "--criterion", "exact")
        assert doc["result"]["certificate"] == pytest.approx(1.00244, abs=1e-4)
        assert doc["result"]["stable"] is False

    def test_check_sufficient(self, capsys):
        doc = run_json(capsys, "check", "--spec", EX2, "--q", "0.2", "--qhat", "0.1633", "--criterion", "sufficient")
        assert doc["result"]["criterion"] == "lyapunov_sufficient"
        assert doc["result"]["stable"] is True

    def test_solve_dare(self, capsys):
        doc = run_json(capsys, "solve", "--spec", EX1, "--dare")
        assert doc["result"]["P"][0][0] == pytest.approx(2.63020, abs=5e-6)

    def test_samples_hoeffding(self, capsys):
        doc = run_json(capsys, "samples", "--n", "300", "--beta", "0.01")
        assert doc["result"]["delta"] == pytest.approx(0.09397, abs=5e-6)

    def test_samples_complexity(self, capsys):
        doc = run_json(capsys, "samples", "--spec", EX1, "--q", "0.2", "--beta", "0.1", "--variant", "scalar")
        assert doc["result"]["min_N"] == 43

    def test_gap_point(self, capsys):
        doc = run_json(capsys, "gap", "--spec", EX1, "--q", "0.2", "--qhat", "0", "--x0", "1")
        assert doc["result"]["gap"] == pytest.approx(0.20915, abs=1e-4)
        assert doc["result"]["upper_bound"] >= doc["result"]["gap"]


class TestJsonRoundTrip:
    def test_reparse_reproduces_values(self, capsys):
        code, out, _ = run(capsys, "certify", "--spec", EX2, "--qhat", "0.1633", "--n", "300")
        assert code == 0
        doc = json.loads(out)
        assert json.loads(json.dumps(doc)) == doc


class TestCsvOutputs:
    def test_regions_format(self, capsys):
        code, out, _ = run(capsys, "regions", "--spec", EX1, "--step", "0.01", "--variant", "general")
        assert code == 0
        lines = out.strip().splitlines()
        manifest = [l for l in lines if l.startswith("#")]
        body = [l for l in lines if not l.startswith("#")]
        assert any("command: regions" in l for l in manifest)
        assert body[0] == "q,q_hat,class"
        classes = {row.split(",")[2] for row in body[1:]}
        assert classes <= {"blue_stabilizing", "red_unstable", "gray_undecided"}
        assert "blue_stabilizing" in classes and "red_unstable" in classes
        # every data row has exactly three fields
        assert all(len(row.split(",")) == 3 for row in body[1:])

    def test_gap_curve_flags_unstable(self, capsys):
        code, out, _ = run(capsys, "gap", "--spec", EX1, "--q", "0.4", "--x0", "1", "--curve", "--step", "0.01")
        assert code == 0
        body = [l for l in out.strip().splitlines() if not l.startswith("#")]
        assert body[0] == "q_hat,gap,stable"
        assert any(",unstable,0" in row for row in body[1:])
        assert any(row.endswith(",1") for row in body[1:])

    def test_trajectory_output(self, capsys):
        code, out, _ = run(
            capsys, "simulate", "--spec", EX2, "--q", "0.2", "--qhat", "0.1633",
            "--x0", "0.9325,1.1616", "--horizon", "10", "--traj", "1", "--seed", "4",
        )
        assert code == 0
        body = [l for l in out.strip().splitlines() if not l.startswith("#")]
        assert body[0] == "t,x1,x2,lambda"
        assert len(body) == 12  # header + states 0..10

    def test_complexity_curve(self, capsys):
        code, out, _ = run(
            capsys, "complexity-curve", "--spec", EX1, "--variant", "scalar",
            "--beta", "0.1", "--step", "0.05",
        )
        assert code == 0
        body = [l for l in out.strip().splitlines() if not l.startswith("#")]
        assert body[0] == "q,bound,min_N"
        rows = [row.split(",") for row in body[1:]]
        # complexity grows toward the critical rate
        assert float(rows[-1][1]) > float(rows[0][1])

    def test_gnuplot_script(self, capsys, tmp_path):
        out_csv = tmp_path / "curve.csv"
        code, _, _ = run(
            capsys, "threshold", "--spec", EX1, "--variant", "general", "--curve",
            "--step", "0.05", "--out", str(out_csv), "--gnuplot",
        )
        assert code == 0
        assert out_csv.exists()
        script = Path(str(out_csv) + ".gp").read_text()
        assert str(out_csv) in script


class TestExitCodes:
    def test_out_of_range_rate_is_usage_error(self, capsys):
        code, _, err = run(capsys, "solve", "--spec", EX1, "--q", "0.5")
        assert code == 1
        assert "critical" in err

    def test_malformed_spec_reports_position(self, capsys, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"A": [[1.5]],\n "B": oops}')
        code, _, err = run(capsys, "solve", "--spec", str(bad), "--q", "0.1")
        assert code == 1
        assert "line 2" in err and "column" in err

    def test_missing_keys(self, capsys, tmp_path):
        bad = tmp_path / "partial.json"
        bad.write_text('{"A": [[1.5]], "B": [[1.0]]}')
        code, _, err = run(capsys, "solve", "--spec", str(bad), "--q", "0.1")
        assert code == 1
        assert "Q" in err and "R" in err

    def test_unstable_gap_is_exit_two(self, capsys):
        code, _, err = run(capsys, "gap", "--spec", EX1, "--q", "0.4", "--qhat", "0", "--x0", "1")
        assert code == 2
        assert "stable" in err

    def test_unknown_flag_is_usage_error(self, capsys):
        code, _, _ = run(capsys, "solve", "--spec", EX1, "--nope")
        assert code == 1

    def test_success_is_zero(self, capsys):
        code, _, _ = run(capsys, "qc", "--spec", EX1)
        assert code == 0


class TestSeedResolution:
    def test_env_override(self, capsys, monkeypatch):
        monkeypatch.setenv("LOSSYLQR_SEED", "7")
        doc = run_json(
            capsys, "simulate", "--spec", EX1, "--q", "0.2", "--qhat", "0",
            "--x0", "1", "--mode", "cost", "--horizon", "20", "--traj", "10",
        )
        assert doc["manifest"]["seed"] == 7
        assert doc["result"]["seed"] == 7

    def test_flag_beats_env(self, capsys, monkeypatch):
        monkeypatch.setenv("LOSSYLQR_SEED", "7")
        doc = run_json(
            capsys, "simulate", "--spec", EX1, "--q", "0.2", "--qhat", "0",
            "--x0", "1", "--mode", "cost", "--horizon", "20", "--traj", "10", "--seed", "3",
        )
        assert doc["manifest"]["seed"] == 3

    def test_default_seed_zero(self, capsys):
        doc = run_json(capsys, "qc", "--spec", EX1)
        assert doc["manifest"]["seed"] == 0

    def test_bad_env_is_usage_error(self, capsys, monkeypatch):
        monkeypatch.setenv("LOSSYLQR_SEED", "not-a-number")
        code, _, err = run(capsys, "qc", "--spec", EX1)
        assert code == 1
        assert "LOSSYLQR_SEED" in err
