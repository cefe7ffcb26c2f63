"""CLI contracts: output layout, manifests, replay byte-identity, threads."""

import json
from pathlib import Path

import numpy as np
import pytest

from fbmlab.cli import dispatch, parse_grid
from fbmlab.manifest import file_sha256


def run(args):
    return dispatch([str(a) for a in args])


class TestParsing:
    def test_grid_specs(self):
        assert parse_grid("1e-1,1e-2") == [0.1, 0.01]
        assert parse_grid("1e-1:1e-4:log") == pytest.approx([1e-1, 1e-2, 1e-3, 1e-4])
        assert len(parse_grid("0.02:0.5:8log")) == 8
        assert parse_grid("0:1:3") == [0.0, 0.5, 1.0]


class TestFbmSample:
    def test_csv_layout_and_manifest(self, tmp_path):
        out = tmp_path / "p.csv"
        code = run(["fbm", "sample", "--hurst", 0.7, "--steps", 256, "--paths", 2,
                    "--seed", 1, "--out", out])
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "t,comp_0,path_id"
        assert len(lines) == 1 + 2 * 257
        assert lines[1].startswith("0.0,0.0,")
        man = json.loads((tmp_path / "p.csv.manifest.json").read_text())
        assert man["params"]["hurst"] == 0.7
        assert man["outputs"][0]["sha256"] == file_sha256(out)

    def test_invalid_hurst_rejected_with_message(self, tmp_path, capsys):
        code = run(["fbm", "sample", "--hurst", 0.4, "--steps", 8, "--paths", 1,
                    "--seed", 0, "--out", tmp_path / "x.csv"])
        assert code == 2
        assert "(1/2, 1)" in capsys.readouterr().err

    def test_volterra_method(self, tmp_path):
        out = tmp_path / "v.csv"
        assert run(["fbm", "sample", "--hurst", 0.8, "--steps", 32, "--paths", 1,
                    "--method", "volterra", "--seed", 3, "--out", out]) == 0
        assert out.exists()


class TestReplay:
    def test_byte_identity(self, tmp_path):
        out = tmp_path / "p.csv"
        run(["fbm", "sample", "--hurst", 0.7, "--steps", 64, "--paths", 2,
             "--seed", 9, "--out", out])
        man = tmp_path / "p.csv.manifest.json"
        scratch = tmp_path / "replay"
        scratch.mkdir()
        assert run(["replay", man, "--out-dir", scratch]) == 0
        assert file_sha256(scratch / "p.csv") == file_sha256(out)

    def test_tampered_seed_detected(self, tmp_path):
        out = tmp_path / "p.csv"
        run(["fbm", "sample", "--hurst", 0.7, "--steps", 64, "--paths", 1,
             "--seed", 9, "--out", out])
        man_path = tmp_path / "p.csv.manifest.json"
        man = json.loads(man_path.read_text())
        man["params"]["seed"] = 10
        man_path.write_text(json.dumps(man))
        assert run(["replay", man_path, "--out-dir", tmp_path / "r2"]) == 3

    def test_missing_config_file_reported(self, tmp_path):
        from fbmlab.fields import heisenberg, save_system

        cfg = tmp_path / "sys.json"
        save_system(heisenberg(), cfg)
        out = tmp_path / "sol.csv"
        assert run(["sde", "solve", "--config", cfg, "--hurst", 0.7, "--steps", 32,
                    "--paths", 1, "--seed", 0, "--out", out]) == 0
        cfg.unlink()
        code = run(["replay", tmp_path / "sol.csv.manifest.json",
                    "--out-dir", tmp_path / "r3"])
        assert code == 2  # resolution error names the missing path

    def test_report_envelope_replay(self, tmp_path):
        out = tmp_path / "rep.json"
        run(["frac", "check-reprh", "--hurst", 0.7, "--steps", 128, "--pairs", 4,
             "--seed", 2, "--out", out])
        env = json.loads(out.read_text())
        assert env["schema"] == "fbmlab.report/1"
        assert env["payload"]["max_normalized_diff"] < 0.05
        assert run(["replay", tmp_path / "rep.json.manifest.json",
                    "--out-dir", tmp_path / "r4"]) == 0


class TestSubcommands:
    def test_sde_solve_csv(self, tmp_path):
        out = tmp_path / "sol.csv"
        assert run(["sde", "solve", "--config", "heisenberg", "--hurst", 0.7,
                    "--steps", 32, "--paths", 2, "--seed", 1, "--out", out]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "t,x_0,x_1,x_2,path_id"
        assert len(lines) == 1 + 2 * 33

    def test_hormander_check_heisenberg(self, tmp_path):
        out = tmp_path / "flag.json"
        assert run(["hormander", "check", "--fields", "heisenberg",
                    "--point", "0,0,0", "--max-level", 4, "--out", out]) == 0
        payload = json.loads(out.read_text())["payload"]
        assert payload["satisfied"] and payload["n_star"] == 2

    def test_hormander_strong_mode(self, tmp_path):
        out = tmp_path / "flag.json"
        assert run(["hormander", "check", "--fields", "grushin", "--point", "0,0",
                    "--mode", "strong", "--out", out]) == 0
        payload = json.loads(out.read_text())["payload"]
        assert payload["growth_vector"] == [1, 2]
        assert payload["homogeneous_dimension"] == 3

    def test_malliavin_gamma(self, tmp_path):
        out = tmp_path / "gamma.json"
        assert run(["malliavin", "gamma", "--config", "heisenberg", "--hurst", 0.7,
                    "--steps", 128, "--seed", 4, "--out", out]) == 0
        payload = json.loads(out.read_text())["payload"]
        assert payload["relation_defect"] <= 1e-8
        assert payload["gram_max_rel_diff"] <= 0.01

    def test_malliavin_probe(self, tmp_path):
        out = tmp_path / "probe.json"
        assert run(["malliavin", "probe", "--config", "elliptic2d", "--hurst", 0.7,
                    "--eps", "1e-2,1e-1", "--paths", 64, "--steps", 32,
                    "--seed", 5, "--out", out]) == 0
        payload = json.loads(out.read_text())["payload"]
        assert np.array(payload["counts"]).shape[1] == 2

    def test_norris_sweep(self, tmp_path):
        out = tmp_path / "sweep.json"
        assert run(["norris", "sweep", "--hurst", 0.7, "--eps", "1e-1,1e-2",
                    "--paths", 200, "--steps", 64, "--scenario", "pullback",
                    "--seed", 6, "--out", out]) == 0
        payload = json.loads(out.read_text())["payload"]
        assert payload["q_hat"] >= 0.05
        assert len(payload["scale_table"]) == 2

    def test_smalltime_exponent(self, tmp_path):
        out = tmp_path / "exp.json"
        assert run(["smalltime", "exponent", "--config", "additive1d", "--hurst", 0.6,
                    "--tgrid", "0.02:0.5:5log", "--paths", 4000, "--steps", 32,
                    "--seed", 7, "--out", out]) == 0
        payload = json.loads(out.read_text())["payload"]
        assert abs(payload["fit_kde"]["slope"] + 0.6) < 0.1

    def test_norris_concentration(self, tmp_path):
        out = tmp_path / "conc.json"
        assert run(["norris", "concentration", "--hurst", 0.75, "--delta", 1 / 128,
                    "--Delta", 0.25, "--paths", 2000, "--seed", 8, "--out", out]) == 0
        payload = json.loads(out.read_text())["payload"]
        assert payload["hs_bound"]["predicted_slope"] == pytest.approx(1.0)


class TestThreadInvariance:
    def test_probe_outputs_identical_across_thread_counts(self, tmp_path):
        digests = []
        for threads, name in ((1, "a.json"), (3, "b.json")):
            out = tmp_path / name
            assert run(["--threads", threads, "malliavin", "probe",
                        "--config", "heisenberg", "--hurst", 0.7,
                        "--eps", "1e-3,1e-2", "--paths", 300, "--steps", 32,
                        "--seed", 11, "--out", out]) == 0
            payload = json.loads(out.read_text())["payload"]
            digests.append(json.dumps(payload, sort_keys=True))
        assert digests[0] == digests[1]
