import math
import os

import numpy as np
import pytest

from ghzclock import cli
from ghzclock.cli import fmt, main, parse_config, write_csv


def read_csv(path):
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:]]


class TestFormatting:
    def test_seventeen_digit_round_trip(self):
        values = [1.0, math.pi, 1e-300, 3.0000000000000004e-05, 0.33883940375859456, -2.5e-4]
        for v in values:
            assert float(fmt(v)) == v

    def test_scientific_below_threshold(self):
        assert "e" in fmt(5e-4)
        assert "e" not in fmt(0.5)

    def test_int_and_bool(self):
        assert fmt(True) == "true"
        assert fmt(7) == "7"

    def test_csv_round_trip(self, tmp_path):
        rows = [(3, "heralded_ghz", 0.00012345678901234567, True)]
        path = tmp_path / "t.csv"
        write_csv(path, ["n", "kind", "x", "flag"], rows)
        header, data = read_csv(path)
        assert header == ["n", "kind", "x", "flag"]
        assert float(data[0][2]) == rows[0][2]


class TestConfig:
    def test_parse_flat_file(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# comment\n n = 6 \n gamma-decay = 0.5\nprotocol = css\n")
        values = parse_config(cfg)
        assert values == {"n": 6, "gamma-decay": 0.5, "protocol": "css"}

    def test_bad_line_is_usage_error(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("this is not a pair\n")
        with pytest.raises(cli.UsageError):
            parse_config(cfg)

    def test_cli_flag_overrides_config(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("n-range = 2:3\ngamma-decay = 0.25\n")
        out = tmp_path / "sweep.csv"
        code = main(["sweep", "--config", str(cfg), "--protocols", "parity_ghz",
                     "--gamma-decay", "1.0", "--out", str(out), "--no-figures"])
        assert code == 0
        manifest = (tmp_path / "sweep.manifest.txt").read_text()
        assert "gamma_decay = 1" in manifest
        assert "n_values = 2,3" in manifest


class TestSweepCommand:
    def test_parity_rows_near_unity(self, tmp_path):
        out = tmp_path / "sweep.csv"
        code = main(["sweep", "--protocols", "parity_ghz", "--n-range", "2:10",
                     "--gamma-decay", "1.0", "--out", str(out), "--no-figures"])
        assert code == 0
        header, data = read_csv(out)
        assert header == ["n_atoms", "protocol", "t_min_s", "delta_omega_ratio", "converged"]
        assert len(data) == 9
        for row in data:
            assert abs(float(row[3]) - 1.0) < 1e-6
            assert row[4] == "true"

    def test_figures_rendered_by_default(self, tmp_path):
        out = tmp_path / "sweep.csv"
        code = main(["sweep", "--protocols", "heralded_ghz", "--n-range", "2:4",
                     "--gamma-decay", "1.0", "--out", str(out)])
        assert code == 0
        assert out.with_suffix(".png").exists()

    def test_unknown_protocol_is_usage_error(self, tmp_path):
        code = main(["sweep", "--protocols", "bogus", "--n-range", "2:4",
                     "--gamma-decay", "1.0", "--out", str(tmp_path / "x.csv")])
        assert code == 1


class TestBoundsCommand:
    def test_bound_columns(self, tmp_path):
        out = tmp_path / "bounds.csv"
        code = main(["bounds", "--n-range", "8,16", "--gamma-decay", "1.0",
                     "--out", str(out), "--no-figures"])
        assert code == 0
        header, data = read_csv(out)
        assert header == ["n_atoms", "sql", "asymptotic", "ghz_qcrb_min"]
        row8 = data[0]
        assert float(row8[1]) == pytest.approx(math.e / 8.0, rel=1e-12)
        assert float(row8[1]) / float(row8[2]) == pytest.approx(math.e, rel=1e-12)


class TestClockCommand:
    def clock_args(self, outdir, extra=()):
        return ["clock", "--preset", "ca+", "--protocol", "heralded_ghz", "--n", "2",
                "--T", "0.11", "--cycles", "3000", "--runs", "2", "--seed", "42",
                "--out", str(outdir), "--no-figures", *extra]

    def test_outputs_and_manifest(self, tmp_path):
        outdir = tmp_path / "run"
        assert main(self.clock_args(outdir)) == 0
        for name in ("allan.csv", "summary.csv", "hops.csv", "manifest.txt"):
            assert (outdir / name).exists()
        manifest = (outdir / "manifest.txt").read_text()
        assert "seed = 42" in manifest
        assert "gamma_decay = 0.90909090909090906" in manifest

    def test_byte_identical_reruns(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(self.clock_args(a)) == 0
        assert main(self.clock_args(b)) == 0
        for name in ("allan.csv", "summary.csv", "hops.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_worker_pool_matches_serial(self, tmp_path, monkeypatch):
        a, b = tmp_path / "serial", tmp_path / "pooled"
        assert main(self.clock_args(a)) == 0
        monkeypatch.setenv(cli.WORKERS_ENV, "2")
        assert main(self.clock_args(b)) == 0
        assert (a / "allan.csv").read_bytes() == (b / "allan.csv").read_bytes()

    def test_missing_seed_is_usage_error(self, tmp_path):
        code = main(["clock", "--preset", "ca+", "--out", str(tmp_path / "x"),
                     "--cycles", "1000", "--runs", "1", "--no-figures"])
        assert code == 1


class TestVerifyCommand:
    def test_passes_with_defaults_scaled_down(self, capsys):
        assert main(["verify", "--n-max", "4", "--draws", "10"]) == 0
        out = capsys.readouterr().out
        assert out.count("PASS") == 5
        assert "FAIL" not in out

    def test_report_file(self, tmp_path):
        out = tmp_path / "verify.csv"
        assert main(["verify", "--n-max", "3", "--draws", "5", "--out", str(out)]) == 0
        header, data = read_csv(out)
        assert header == ["check", "max_deviation", "tolerance", "passed"]
        assert all(row[3] == "true" for row in data)

    def test_failure_exits_two(self, monkeypatch, capsys):
        from ghzclock.verify import CheckResult

        monkeypatch.setattr(cli, "run_verification",
                            lambda n_max, draws: [CheckResult("forced", 1.0, 1e-10)])
        assert main(["verify"]) == 2

    def test_runtime_error_exits_three(self, monkeypatch, tmp_path):
        def boom(*args, **kwargs):
            raise RuntimeError("disk on fire")

        monkeypatch.setattr(cli, "sweep_vs_N", boom)
        code = main(["sweep", "--protocols", "css", "--n-range", "2:3",
                     "--gamma-decay", "1.0", "--out", str(tmp_path / "x.csv"), "--no-figures"])
        assert code == 3
