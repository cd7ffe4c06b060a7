import csv
import dataclasses
import gzip
import json
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose

import localgd.cli as cli
from localgd import ExperimentConfig, main
from localgd.cli import CostModel, resolve_gamma, synthetic_logistic_dataset

TOY_LIBSVM = """+1 1:0.5 3:-2
-1 2:1
# comment
+1 1:1 2:2 3:3
"""


def run_main(args):
    return main(list(args))


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestPlanCommand:
    def test_worked_example_json_line(self, capsys):
        assert run_main(["plan", "--epsilon", "0.03", "--L", "1", "--sigma2", "1", "--r0sq", "1"]) == 0
        out = capsys.readouterr().out
        payload = json.loads(out.splitlines()[0])
        assert payload["regime"] == "high-accuracy"
        assert payload["gamma"] == 0.25
        assert_allclose(payload["T"], 4 / (0.03 * 0.25), rtol=1e-15)
        assert_allclose(payload["H"], 0.1, rtol=1e-12)
        assert payload["rounded"] == {
            "H_int": 1,
            "T_int": 534,
            "comm_rounds_int": 534,
            "gamma_ok": True,
            "gamma_max": 0.25,
        }
        assert "regime" in out and "comm lower bound" in out

    def test_low_accuracy_regime_notes_plain_gd(self, capsys):
        assert run_main(["plan", "--epsilon", "3", "--L", "1", "--sigma2", "1", "--r0sq", "1"]) == 0
        out = capsys.readouterr().out
        assert json.loads(out.splitlines()[0])["regime"] == "low-accuracy"
        assert "plain gradient descent" in out

    def test_inadmissible_stepsize_is_an_error(self, capsys):
        code = run_main(
            ["plan", "--epsilon", "0.1", "--L", "1", "--sigma2", "1", "--r0sq", "1", "--gamma", "0.3"]
        )
        assert code == 2
        assert "gamma" in capsys.readouterr().err


class TestParseCommand:
    def test_statistics_output(self, tmp_path, capsys):
        path = tmp_path / "toy.txt"
        path.write_text(TOY_LIBSVM)
        assert run_main(["parse", str(path)]) == 0
        out = capsys.readouterr().out
        assert "rows      3" in out
        assert "features  3" in out
        assert "labels    +1: 2  -1: 1" in out
        assert "nnz       6" in out and "min 1, max 3" in out

    def test_gzip_gives_identical_output(self, tmp_path, capsys):
        plain = tmp_path / "toy.txt"
        plain.write_text(TOY_LIBSVM)
        zipped = tmp_path / "toy.txt.gz"
        zipped.write_bytes(gzip.compress(TOY_LIBSVM.encode()))
        run_main(["parse", str(plain)])
        first = capsys.readouterr().out
        run_main(["parse", str(zipped)])
        assert capsys.readouterr().out == first

    def test_malformed_line_reported_with_location(self, tmp_path, capsys):
        path = tmp_path / "bad.txt"
        path.write_text("+1 1:0.5\n-1 2:abc\n")
        assert run_main(["parse", str(path)]) == 1
        err = capsys.readouterr().err
        assert "line 2" in err and str(path) in err

    def test_dim_padding(self, tmp_path, capsys):
        path = tmp_path / "toy.txt"
        path.write_text(TOY_LIBSVM)
        assert run_main(["parse", str(path), "--dim", "10"]) == 0
        assert "features  10" in capsys.readouterr().out


def quadratic_run_args(tmp_path, **extra):
    args = [
        "run", "--variant", "quadratic", "--M", "3", "--d", "4",
        "--T", "16", "--H", "1,8", "--rho", "0.5,2", "--out", str(tmp_path / "runs"),
    ]
    for key, value in extra.items():
        args += [f"--{key}", str(value)]
    return args


class TestRunCommand:
    def test_writes_csv_and_metadata_per_interval(self, tmp_path, capsys):
        assert run_main(quadratic_run_args(tmp_path)) == 0
        outdir = tmp_path / "runs"
        for H in (1, 8):
            rows = read_csv(outdir / f"run_H{H}.csv")
            assert len(rows) == 17
            assert list(rows[0].keys()) == [
                "step", "comm_rounds_so_far", "wall_clock_rho_0.5", "wall_clock_rho_2",
                "f_hat_gap", "f_bar_gap", "V", "r_sq",
            ]
            meta = json.loads((outdir / f"run_H{H}.meta.json").read_text())
            assert meta["H"] == H and meta["T"] == 16 and meta["variant"] == "quadratic"
            assert meta["theorem1_checked"] is True
            assert meta["divergence_step"] is None
        out = capsys.readouterr().out
        assert "H=1:" in out and "H=8:" in out

    def test_comm_and_wall_clock_columns(self, tmp_path):
        run_main(quadratic_run_args(tmp_path))
        rows = read_csv(tmp_path / "runs" / "run_H8.csv")
        comm = [int(r["comm_rounds_so_far"]) for r in rows]
        assert comm == [0] * 8 + [1] * 8 + [2]
        for r in rows:
            t, c = int(r["step"]), int(r["comm_rounds_so_far"])
            assert float(r["wall_clock_rho_0.5"]) == t + 0.5 * c
            assert float(r["wall_clock_rho_2"]) == t + 2 * c
        rows1 = read_csv(tmp_path / "runs" / "run_H1.csv")
        assert all(int(r["comm_rounds_so_far"]) == int(r["step"]) for r in rows1)
        # every-step averaging keeps the copies identical
        assert all(float(r["V"]) == 0.0 for r in rows1)

    def test_horizon_rounds_up_to_interval_multiple(self, tmp_path):
        run_main(quadratic_run_args(tmp_path, H="5", T="16"))
        meta = json.loads((tmp_path / "runs" / "run_H5.meta.json").read_text())
        assert meta["T"] == 20 and meta["T_requested"] == 16

    def test_outputs_are_byte_identical_across_reruns(self, tmp_path):
        args = quadratic_run_args(tmp_path)
        run_main(args)
        first = {p.name: p.read_bytes() for p in sorted((tmp_path / "runs").iterdir())}
        run_main(args)
        second = {p.name: p.read_bytes() for p in sorted((tmp_path / "runs").iterdir())}
        assert first == second

    def test_thread_cap_does_not_change_outputs(self, tmp_path, monkeypatch):
        args = quadratic_run_args(tmp_path)
        run_main(args)
        parallel = (tmp_path / "runs" / "run_H8.csv").read_bytes()
        monkeypatch.setenv("LOCALGD_THREADS", "1")
        run_main(args)
        assert (tmp_path / "runs" / "run_H8.csv").read_bytes() == parallel

    def test_experiment_stepsize_skips_ergodic_check(self, tmp_path):
        run_main(quadratic_run_args(tmp_path, gamma="experiment"))
        meta = json.loads((tmp_path / "runs" / "run_H8.meta.json").read_text())
        assert_allclose(meta["gamma"], 1.0 / meta["L"], rtol=1e-15)
        assert meta["theorem1_checked"] is False

    def test_divergent_run_writes_metadata_and_empty_table(self, tmp_path, capsys):
        assert run_main(quadratic_run_args(tmp_path, gamma="1e200", H="1", T="4")) == 0
        outdir = tmp_path / "runs"
        meta = json.loads((outdir / "run_H1.meta.json").read_text())
        assert meta["divergence_step"] is not None and meta["divergence_step"] >= 1
        assert meta["theorem1_checked"] is False
        assert (outdir / "run_H1.csv").read_text() == "step,comm_rounds_so_far\n"
        assert "diverged at step" in capsys.readouterr().out

    def test_dataset_file_partitioned_into_worker_shards(self, tmp_path):
        data = tmp_path / "toy.txt"
        data.write_text(
            "+1 1:1\n+1 2:1\n+1 1:1 2:1\n-1 1:-1\n-1 2:-1\n-1 1:-1 2:-1\n"
        )
        assert run_main([
            "run", "--dataset", str(data), "--M", "2", "--H", "1", "--T", "8",
            "--rho", "1", "--out", str(tmp_path / "runs"),
        ]) == 0
        meta = json.loads((tmp_path / "runs" / "run_H1.meta.json").read_text())
        assert meta["dataset"] == str(data)
        assert meta["n"] == 6 and meta["M"] == 2 and meta["variant"] == "logistic"
        assert_allclose(meta["lambda"], 1.0 / 6.0, rtol=1e-15)


class TestVerifyCommand:
    def test_small_sweep_passes(self, tmp_path, capsys):
        assert run_main(["verify", "--count", "4", "--out", str(tmp_path)]) == 0
        report = json.loads((tmp_path / "verify_report.json").read_text())
        assert report["pass"] is True
        assert report["count"] == 4 and report["checks_failed"] == 0
        assert len(report["instances"]) == 4
        assert report["checks_passed"] == 4 * 5
        names = [c["name"] for c in report["instances"][0]["checks"]]
        assert names == ["lemma1", "lemma2", "lemma3", "lemma4", "theorem1"]
        out = capsys.readouterr().out
        assert "PASS: verification sweep over 4 instances" in out

    def test_range_gated_checks_skip_at_large_stepsize(self, tmp_path, capsys):
        assert run_main([
            "verify", "--count", "3", "--gamma", "experiment", "--out", str(tmp_path)
        ]) == 0
        report = json.loads((tmp_path / "verify_report.json").read_text())
        assert report["checks_failed"] == 0
        assert report["checks_skipped_precondition"] == 2 * 3  # lemma2 + theorem1
        out = capsys.readouterr().out
        assert "skipped (precondition)" in out

    def test_corrupted_trajectory_fails_the_sweep(self, tmp_path, monkeypatch, capsys):
        real = cli.run_local_gd

        def corrupt(*args, **kwargs):
            traj = real(*args, **kwargs)
            r2 = traj.r2.copy()
            r2[1] += 1e3
            return dataclasses.replace(traj, r2=r2)

        monkeypatch.setattr(cli, "run_local_gd", corrupt)
        assert run_main(["verify", "--count", "2", "--out", str(tmp_path)]) == 1
        report = json.loads((tmp_path / "verify_report.json").read_text())
        assert report["pass"] is False and report["checks_failed"] > 0
        assert "FAIL" in capsys.readouterr().out

    def test_strict_flag_recorded_and_checked(self, tmp_path):
        assert run_main(["verify", "--count", "2", "--strict", "--out", str(tmp_path)]) == 0
        report = json.loads((tmp_path / "verify_report.json").read_text())
        assert report["strict"] is True
        lemma2 = next(c for c in report["instances"][0]["checks"] if c["name"] == "lemma2")
        forms = {v["form"] for v in lemma2.get("violations", [])}
        assert lemma2["status"] == "pass" and not forms
        # strict doubles the number of epoch inequalities evaluated
        loose_points = 2 * (report["instances"][0]["T"] // report["instances"][0]["H"])
        assert lemma2["total_points"] == 2 * loose_points


class TestConfigHandling:
    def test_defaults_validate(self):
        ExperimentConfig().validate()

    def test_config_file_with_flag_override(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "variant": "quadratic", "M": 2, "d": 3, "T": 8, "H": [1],
            "rho": [1.0], "out": str(tmp_path / "runs"),
        }))
        assert run_main(["run", "--config", str(cfg), "--T", "4"]) == 0
        meta = json.loads((tmp_path / "runs" / "run_H1.meta.json").read_text())
        assert meta["T_requested"] == 4  # flag wins over the file

    def test_boolean_file_keys_survive_absent_flags(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"strict": True, "out": str(tmp_path)}))
        assert run_main(["verify", "--config", str(cfg), "--count", "2"]) == 0
        report = json.loads((tmp_path / "verify_report.json").read_text())
        assert report["strict"] is True

    def test_unknown_config_key_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"stepsize": 0.1}))
        assert run_main(["run", "--config", str(cfg)]) == 2
        assert "stepsize" in capsys.readouterr().err

    def test_invalid_values_rejected(self, tmp_path, capsys):
        assert run_main(quadratic_run_args(tmp_path, T="4")) == 2  # T < max(H) = 8
        assert "T=4" in capsys.readouterr().err


class TestSyntheticDataset:
    def test_sorted_labels_and_planted_margin(self):
        n, d, seed = 60, 8, 3
        ds = synthetic_logistic_dataset(n, d, seed)
        assert ds.n == n and ds.d == d
        assert np.all(np.diff(ds.y) >= 0)  # -1 block, then +1 block
        rng = np.random.default_rng(seed)
        w = rng.standard_normal(d)
        w /= np.linalg.norm(w)
        margins = ds.y * (ds.X.toarray() @ w)
        assert np.all(margins >= cli.SYNTHETIC_MARGIN - 1e-9)

    def test_deterministic(self):
        a = synthetic_logistic_dataset(30, 5, 7)
        b = synthetic_logistic_dataset(30, 5, 7)
        assert a.X.toarray().tobytes() == b.X.toarray().tobytes()
        assert a.y.tobytes() == b.y.tobytes()


class TestCostAndStepsizePolicies:
    def test_wall_clock(self):
        model = CostModel(rho=10.0)
        assert model.wall_clock(100, 10) == 200.0
        assert model.wall_clock_uniform(100, 10) == 200.0
        assert CostModel(rho=0.0).wall_clock_uniform(64, 4) == 64.0
        with pytest.raises(ValueError):
            CostModel(rho=-1.0)

    def test_resolve_gamma(self):
        assert resolve_gamma("theory", 2.0, 4) == 1.0 / 32.0
        assert resolve_gamma("experiment", 2.0, 4) == 0.5
        assert resolve_gamma(0.125, 2.0, 4) == 0.125
        assert resolve_gamma("0.125", 2.0, 4) == 0.125
