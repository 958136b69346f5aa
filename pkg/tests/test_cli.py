import os

import pytest

from bitarq.cli import main
from reference_designs import REFERENCE_SCHEDULE


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def body(text: str) -> str:
    return "\n".join(l for l in text.splitlines() if not l.startswith("#"))


class TestFitCheck:
    def test_wifi_point(self, capsys):
        code, out, _ = run(capsys, "fit-check", "--tech", "wifi", "--ber", "1e-4",
                           "--reproducible")
        assert code == 0
        assert body(out) == "tech,target_ber,snr_db\nwifi,0.0001,6.63"

    def test_unknown_tech(self, capsys):
        code, _, err = run(capsys, "fit-check", "--tech", "lte", "--ber", "1e-4")
        assert code == 2
        assert "error:" in err

    def test_out_of_range_target(self, capsys):
        code, _, err = run(capsys, "fit-check", "--tech", "wifi", "--ber", "0.5")
        assert code == 2
        assert "error:" in err


class TestFusionPlan:
    def test_reference_schedule(self, capsys):
        code, out, _ = run(capsys, "fusion-plan", "--tech", "zigbee", "--w", "4",
                           "--d", "3", "--blocks", "10", "--reproducible")
        assert code == 0
        assert body(out) == REFERENCE_SCHEDULE

    def test_header_echoes_config(self, capsys):
        _, out, _ = run(capsys, "fusion-plan", "--tech", "zigbee", "--w", "4",
                        "--d", "3", "--blocks", "2", "--reproducible")
        header = [l for l in out.splitlines() if l.startswith("#")]
        assert any("blocks=2" in l and "w=4" in l for l in header)
        assert any(l.startswith("# tool: bitarq") for l in header)


class TestSweeps:
    def test_rate_sweep_columns(self, capsys):
        code, out, _ = run(capsys, "sweep-rate", "--snr-db", "5", "--d", "1",
                           "--n", "256", "--points", "6", "--reproducible")
        assert code == 0
        rows = body(out).splitlines()
        assert rows[0] == "rf,ber_approx,ber_exact,ber_mc,mc_stderr"
        assert len(rows) == 7
        assert all(r.endswith(",,") for r in rows[1:])  # no MC columns without bits

    def test_mc_columns_filled(self, capsys):
        code, out, _ = run(capsys, "sweep-window", "--snr-db", "0", "--d", "1",
                           "--n", "200", "--points", "2", "--bits", "200000",
                           "--seed", "5", "--reproducible")
        assert code == 0
        rows = body(out).splitlines()[1:]
        assert all(len(r.split(",")) == 5 and r.split(",")[3] for r in rows)

    def test_reproducible_runs_identical(self, capsys):
        args = ("sweep-threshold", "--snr-db", "2.5", "--d", "1", "--n", "128",
                "--points", "4", "--bits", "128000", "--seed", "3", "--reproducible")
        _, out1, _ = run(capsys, *args)
        _, out2, _ = run(capsys, *args)
        assert out1 == out2


class TestSimulate:
    def test_repetition_baseline(self, capsys):
        code, out, _ = run(capsys, "simulate", "--scheme", "full_repetition",
                           "--snr-db", "0", "--n", "1000", "--d", "1",
                           "--bits", "500000", "--seed", "7", "--reproducible")
        assert code == 0
        row = body(out).splitlines()[1].split(",")
        ber = float(row[3])
        assert 0.02 < ber < 0.026
        assert row[5] == "0.50000000"

    def test_requires_one_strategy_parameter(self, capsys):
        code, _, err = run(capsys, "simulate", "--scheme", "sequential",
                           "--snr-db", "0", "--n", "100", "--d", "1",
                           "--bits", "100000")
        assert code == 2
        assert "exactly one" in err

    def test_same_seed_same_errors(self, capsys):
        args = ("simulate", "--scheme", "sequential", "--snr-db", "3",
                "--n", "500", "--d", "2", "--bits", "500000", "--seed", "11",
                "--window", "0.2", "--reproducible")
        _, out1, _ = run(capsys, *args)
        _, out2, _ = run(capsys, *args)
        assert out1 == out2


class TestFeedbackSim:
    def test_default_width_is_optimal(self, capsys):
        code, out, _ = run(capsys, "feedback-sim", "--n", "16", "--w", "3",
                           "--trials", "200", "--seed", "1", "--reproducible")
        assert code == 0
        rows = body(out).splitlines()
        header = rows[0].split(",")
        values = rows[1].split(",")
        assert values[header.index("c1")] == values[header.index("c1_opt")] == "9"
        assert values[header.index("expected_k")] == "560"


class TestFusionFeasibility:
    def test_row(self, capsys):
        code, out, _ = run(capsys, "fusion-feasibility", "--tech", "zigbee",
                           "--pf", "1e-3", "--pr", "1e-5", "--nseg", "2",
                           "--wseg", "3", "--reproducible")
        assert code == 0
        row = body(out).splitlines()[1].split(",")
        assert row[5] == "50"
        assert float(row[6]) == pytest.approx(0.9978, abs=1e-4)
        assert row[8] == "True"


class TestOutputFiles:
    def test_writes_file(self, capsys, tmp_path):
        path = tmp_path / "out.csv"
        code, out, _ = run(capsys, "fit-check", "--tech", "zigbee", "--ber", "1e-3",
                           "-o", str(path), "--reproducible")
        assert code == 0
        assert out == ""
        assert "zigbee,0.001,-1.16" in path.read_text()

    def test_no_partial_file_on_error(self, capsys, tmp_path):
        path = tmp_path / "out.csv"
        code, _, _ = run(capsys, "fit-check", "--tech", "zigbee", "--ber", "0.9",
                         "-o", str(path))
        assert code == 2
        assert not path.exists()
        assert not any(p.name.startswith(".bitarq-") for p in tmp_path.iterdir())

    def test_numeric_failure_exit_code(self, capsys, monkeypatch):
        from bitarq.errors import NumericFailureError
        import bitarq.cli as cli_mod

        def boom(tech, ber):
            raise NumericFailureError("synthetic", 1e-3)

        monkeypatch.setattr(cli_mod, "required_snr", boom)
        code, _, err = run(capsys, "fit-check", "--tech", "zigbee", "--ber", "1e-3")
        assert code == 3
        assert "numeric failure" in err

    def test_default_sweep_is_64_rows_and_unimodal(self, capsys):
        from bitarq.optimize import is_unimodal

        code, out, _ = run(capsys, "sweep-rate", "--snr-db", "5", "--d", "1",
                           "--n", "1024", "--reproducible")
        assert code == 0
        rows = body(out).splitlines()[1:]
        assert len(rows) == 64
        bers = [float(r.split(",")[1]) for r in rows]
        assert is_unimodal(bers, atol=1e-12 * max(bers))

    def test_argparse_rejects_bad_flag_values(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["sweep-rate", "--snr-db", "5", "--d", "0", "--n", "128"])
        assert exc.value.code == 2
