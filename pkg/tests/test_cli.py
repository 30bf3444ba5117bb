import json
import math
import os

import numpy as np
import pytest

from treepolymer.cli import (
    EXIT_BUDGET,
    EXIT_CONFIG,
    EXIT_OK,
    ConfigError,
    RunConfig,
    build_parser,
    main,
    parse_config_file,
    parse_grid,
)


def run(args):
    return main(args)


class TestGridParsing:
    def test_scalar(self):
        assert parse_grid("1.5") == [1.5]

    def test_grid_expansion(self):
        got = parse_grid("0:1:0.25")
        assert got == pytest.approx([0.0, 0.25, 0.5, 0.75, 1.0])
        assert all(b > a for a, b in zip(got, got[1:]))

    def test_grid_inclusive_endpoint(self):
        got = parse_grid("0:3:0.05")
        assert len(got) == 61
        assert got[-1] == pytest.approx(3.0)

    @pytest.mark.parametrize("bad", ["1:2", "2:1:0.5", "0:1:0", "0:1:-1", "a:b:c", "x"])
    def test_rejects(self, bad):
        with pytest.raises(ConfigError):
            parse_grid(bad)


class TestConfigFile:
    def test_parse_and_precedence(self, tmp_path):
        cfgfile = tmp_path / "run.cfg"
        cfgfile.write_text("law=constant:1\nell=4\nseed=99  # comment\n\n# full line\n")
        parser = build_parser()
        args = parser.parse_args(
            ["simulate", "--config", str(cfgfile), "--ell", "3", "--depth", "5"]
        )
        from treepolymer.cli import build_config

        cfg = build_config(args)
        assert cfg.law == "constant:1"  # from file
        assert cfg.ell == 3  # flag wins over file
        assert cfg.seed == 99
        assert cfg.depth == 5
        assert cfg.replicas == 1000  # default

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            parse_config_file("lol=1\n")

    def test_round_trip(self):
        cfg = RunConfig(command="simulate", law="gaussian:0,1", ell=4, seed=7)
        parsed = parse_config_file(cfg.to_text())
        cfg2 = RunConfig(
            command="simulate",
            **{
                k: (int(v) if k in ("ell", "depth", "replicas", "seed", "threads", "budget", "split_depth") else (float(v) if k in ("theta", "eps") else v))
                for k, v in parsed.items()
            },
        )
        assert cfg2 == cfg


class TestExitCodes:
    def test_unknown_command(self, capsys):
        assert run(["frobnicate", "--law", "constant:1"]) == EXIT_CONFIG

    def test_bad_law_spec(self, tmp_path):
        code = run(
            ["simulate", "--law", "weird:1", "--outdir", str(tmp_path), "--depth", "3"]
        )
        assert code == EXIT_CONFIG

    def test_missing_law(self, tmp_path):
        assert run(["simulate", "--outdir", str(tmp_path)]) == EXIT_CONFIG

    def test_budget_exceeded(self, tmp_path):
        code = run(
            [
                "simulate",
                "--law",
                "gaussian:0,1",
                "--depth",
                "20",
                "--budget",
                "1000",
                "--outdir",
                str(tmp_path),
            ]
        )
        assert code == EXIT_BUDGET

    def test_bad_grid(self, tmp_path):
        code = run(
            ["theory-scan", "--law", "gaussian:0,1", "--beta", "3:1:0.5", "--outdir", str(tmp_path)]
        )
        assert code == EXIT_CONFIG


def _read(path):
    with open(path, "rb") as fh:
        return fh.read()


class TestSimulate:
    def test_constant_profile(self, tmp_path):
        code = run(
            [
                "simulate",
                "--law",
                "constant:1",
                "--beta",
                "1",
                "--depth",
                "10",
                "--outdir",
                str(tmp_path),
            ]
        )
        assert code == EXIT_OK
        csv = (tmp_path / "simulate.csv").read_text()
        lines = csv.splitlines()
        assert lines[0].startswith("# treepolymer=")
        assert lines[1] == "n,z,log_unnormalized,free_energy"
        zs = [float(line.split(",")[1]) for line in lines[2:]]
        assert len(zs) == 11
        for z in zs:
            assert z == pytest.approx(1.0, rel=1e-12)
        assert "\r" not in csv
        summary = json.loads((tmp_path / "simulate_summary.json").read_text())
        assert summary["config"]["law"] == "constant:1"

    def test_no_temp_leftovers(self, tmp_path):
        run(["simulate", "--law", "constant:1", "--depth", "4", "--outdir", str(tmp_path)])
        leftovers = [p for p in os.listdir(tmp_path) if p.startswith(".tmp-")]
        assert leftovers == []

    def test_byte_identical_across_runs_and_workers(self, tmp_path):
        outs = []
        for i, threads in enumerate((1, 4, 8)):
            d = tmp_path / f"run{i}"
            code = run(
                [
                    "simulate",
                    "--law",
                    "gaussian:0,1",
                    "--beta",
                    "2.0",
                    "--depth",
                    "12",
                    "--seed",
                    "31337",
                    "--threads",
                    str(threads),
                    "--outdir",
                    str(d),
                ]
            )
            assert code == EXIT_OK
            outs.append(_read(d / "simulate.csv"))
        assert outs[0] == outs[1] == outs[2]


class TestTheoryScan:
    def test_gaussian_kink(self, tmp_path):
        code = run(
            [
                "theory-scan",
                "--law",
                "gaussian:0,1",
                "--beta",
                "0:3:0.05",
                "--outdir",
                str(tmp_path),
            ]
        )
        assert code == EXIT_OK
        lines = (tmp_path / "theory_scan.csv").read_text().splitlines()
        header = lines[1].split(",")
        bi, hai, hqi, ri = (
            header.index("beta"),
            header.index("h_a"),
            header.index("h_q"),
            header.index("regime"),
        )
        bc = math.sqrt(2.0 * math.log(2.0))
        flips = 0
        prev = None
        for line in lines[2:]:
            cells = line.split(",")
            beta, h_a, h_q, regime = (
                float(cells[bi]),
                float(cells[hai]),
                float(cells[hqi]),
                cells[ri],
            )
            if beta < bc:
                assert regime == "weak" and h_q == pytest.approx(h_a, rel=1e-12)
            else:
                assert regime == "strong" and h_q == pytest.approx(beta * bc, rel=1e-8)
            if prev is not None and regime != prev:
                flips += 1
            prev = regime
        assert flips == 1


class TestChi:
    def test_chi_runs(self, tmp_path):
        code = run(
            [
                "chi",
                "--law",
                "twopoint:0,1,0.5",
                "--beta",
                "0.8",
                "--depth",
                "10",
                "--delta",
                "0.5",
                "--outdir",
                str(tmp_path),
            ]
        )
        assert code == EXIT_OK
        summary = json.loads((tmp_path / "chi_summary.json").read_text())
        assert not summary["diverging"]
        lines = (tmp_path / "chi.csv").read_text().splitlines()
        assert lines[1] == "n,term,partial_sum"
        assert len(lines) == 2 + 11


class TestMoments:
    def test_moments_deterministic_across_workers(self, tmp_path):
        outs = []
        for i, threads in enumerate((1, 4, 8)):
            d = tmp_path / f"m{i}"
            code = run(
                [
                    "moments",
                    "--law",
                    "twopoint:0,1,0.5",
                    "--beta",
                    "1.0",
                    "--depth",
                    "8",
                    "--replicas",
                    "1000",
                    "--seed",
                    "777",
                    "--threads",
                    str(threads),
                    "--outdir",
                    str(d),
                ]
            )
            assert code == EXIT_OK
            outs.append(_read(d / "moments.csv"))
        assert outs[0] == outs[1] == outs[2]


class TestSurvival:
    def test_survival_strong(self, tmp_path):
        beta = 2.0 * math.sqrt(2.0 * math.log(2.0))
        code = run(
            [
                "survival",
                "--law",
                "gaussian:0,1",
                "--beta",
                str(beta),
                "--depth",
                "8",
                "--replicas",
                "300",
                "--outdir",
                str(tmp_path),
            ]
        )
        assert code == EXIT_OK
        lines = (tmp_path / "survival.csv").read_text().splitlines()
        assert lines[1] == "n,threshold,probability,std_error"

    def test_survival_weak_rejected(self, tmp_path):
        code = run(
            [
                "survival",
                "--law",
                "gaussian:0,1",
                "--beta",
                "0.5",
                "--depth",
                "8",
                "--replicas",
                "300",
                "--outdir",
                str(tmp_path),
            ]
        )
        assert code == EXIT_CONFIG


class TestEstimateHq:
    def test_runs_small(self, tmp_path):
        code = run(
            [
                "estimate-hq",
                "--law",
                "gaussian:0,1",
                "--beta",
                "2.4",
                "--depth",
                "10",
                "--replicas",
                "100",
                "--outdir",
                str(tmp_path),
            ]
        )
        assert code == EXIT_OK
        lines = (tmp_path / "estimate_hq.csv").read_text().splitlines()
        assert lines[1] == "depth,mean_free_energy,std_error,h_q_reference,gap"


class TestVerify:
    def test_verify_passes(self, tmp_path):
        code = run(["verify", "--outdir", str(tmp_path)])
        assert code == EXIT_OK
        summary = json.loads((tmp_path / "verify_summary.json").read_text())
        assert summary["passed"]
        assert all(c["passed"] for c in summary["checks"])
        assert len(summary["checks"]) >= 6

    def test_json_key_order_stable(self, tmp_path):
        run(["verify", "--outdir", str(tmp_path)])
        a = (tmp_path / "verify_summary.json").read_text()
        run(["verify", "--outdir", str(tmp_path)])
        b = (tmp_path / "verify_summary.json").read_text()
        assert a == b
