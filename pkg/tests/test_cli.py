import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from lrqr.cli import main

from oracles import empirical_quantile_ref


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--kind", "group", "--groups", "5", "--seed", "7", "--n1", "600",
                 "--n2", "600", "--n3", "600", "--n-test", "600", "--out", str(out)]) == 0
    return out


def _fit_args(d, *extra):
    return ["--source", str(d / "source_labeled.csv"),
            "--target-unlabeled", str(d / "target_unlabeled.csv"),
            "--source-unlabeled", str(d / "source_unlabeled.csv"), *extra]


class TestSynth:
    def test_files_and_determinism(self, synth_dir, tmp_path):
        names = ["source_labeled.csv", "target_unlabeled.csv", "source_unlabeled.csv",
                 "test.csv", "oracle_r.csv", "manifest.json"]
        assert all((synth_dir / n).exists() for n in names)
        before = {n: (synth_dir / n).read_bytes() for n in names}
        main(["synth", "--kind", "group", "--groups", "5", "--seed", "7", "--n1", "600",
              "--n2", "600", "--n3", "600", "--n-test", "600", "--out", str(synth_dir)])
        assert before == {n: (synth_dir / n).read_bytes() for n in names}
        manifest = json.loads(before["manifest.json"])
        assert manifest["flags"]["seed"] == 7 and manifest["spec"]["kind"] == "group_shift"

    def test_no_shift_oracle(self, tmp_path):
        assert main(["synth", "--kind", "gaussian", "--mu", "0", "--n1", "20", "--n2", "20",
                     "--n3", "20", "--n-test", "20", "--out", str(tmp_path)]) == 0
        r = np.loadtxt(tmp_path / "oracle_r.csv", delimiter=",", skiprows=1)[:, 1]
        np.testing.assert_array_equal(r, 1.0)

    def test_missing_dir(self, tmp_path, capsys):
        missing = tmp_path / "nope"
        assert main(["synth", "--out", str(missing)]) == 1
        assert str(missing) in capsys.readouterr().err

    def test_custom_groups(self, tmp_path):
        assert main(["synth", "--groups", "3", "--n1", "10", "--n2", "10", "--n3", "10",
                     "--n-test", "10", "--out", str(tmp_path)]) == 0
        spec = json.loads((tmp_path / "manifest.json").read_text())["spec"]
        assert len(spec["p"]) == 3 and abs(sum(spec["q"]) - 1) < 1e-12


class TestFitTune:
    def test_intercept_quantile(self, synth_dir, tmp_path):
        out = tmp_path / "m.json"
        assert main(["fit", *_fit_args(synth_dir), "--lambda", "0", "--basis", "intercept",
                     "--out", str(out)]) == 0
        s = np.loadtxt(synth_dir / "source_labeled.csv", delimiter=",", skiprows=1)[:, 1]
        model = json.loads(out.read_text())
        assert model["gamma"][0] == pytest.approx(empirical_quantile_ref(s.tolist(), 0.9),
                                                  abs=1e-3)
        assert model["diagnostics"]["converged"] is True
        assert (tmp_path / "m.json.manifest.json").exists()

    def test_tune_grid(self, synth_dir, tmp_path):
        out = tmp_path / "t.json"
        assert main(["tune", *_fit_args(synth_dir), "--features", "group", "--basis", "groups",
                     "--groups", "5", "--out", str(out)]) == 0
        tune = json.loads((tmp_path / "t.json.tune.json").read_text())
        lam = tune["chosen_lambda"]
        assert tune["lambda_star"] / 10 - 1e-15 <= lam <= tune["lambda_star"]
        assert json.loads(out.read_text())["lambda"] == lam

    def test_malformed_csv(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("x,score\n1,0.5\n2,abc\n")
        rc = main(["fit", "--source", str(bad), "--target-unlabeled", str(bad), "--features",
                   "x", "--out", str(tmp_path / "m.json")])
        assert rc == 1
        err = capsys.readouterr().err
        assert "row 2" in err and "abc" in err

    def test_non_convergence_exit_code(self, synth_dir, tmp_path):
        out = tmp_path / "m.json"
        rc = main(["fit", *_fit_args(synth_dir), "--features", "group", "--basis", "groups",
                   "--groups", "5", "--lambda", "0.5", "--max-outer", "1", "--tol", "1e-15",
                   "--out", str(out)])
        assert rc == 2
        assert json.loads(out.read_text())["diagnostics"]["converged"] is False

    def test_usage_error_is_input_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["fit", "--source", "x.csv"])
        assert exc.value.code == 1


class TestEvalBench:
    def test_eval(self, synth_dir, tmp_path):
        model = tmp_path / "m.json"
        main(["fit", *_fit_args(synth_dir), "--features", "group", "--basis", "groups",
              "--groups", "5", "--lambda", "0.3", "--out", str(model)])
        assert main(["eval", "--model", str(model), "--test", str(synth_dir / "test.csv"),
                     "--features", "group", "--group", "group", "--out", str(tmp_path)]) == 0
        rows = list(csv.DictReader(open(tmp_path / "report.csv")))
        assert rows[0]["method"] == "m" and 0.7 < float(rows[0]["coverage"]) <= 1.0
        doc = json.loads((tmp_path / "report.json").read_text())
        assert len(doc["methods"]["m"]["group_coverage_mean"]) == 5

    def test_bench_reproducible(self, tmp_path):
        args = ["bench", "--seed", "5", "--methods", "split,weighted_oracle,lrqr",
                "--replications", "1", "--n1", "300", "--n2", "300", "--n3", "300",
                "--n-test", "300"]
        a, b = tmp_path / "a", tmp_path / "b"
        a.mkdir()
        b.mkdir()
        assert main([*args, "--out", str(a)]) == 0
        assert main([*args, "--out", str(b), "--jobs", "2"]) == 0
        assert (a / "report.csv").read_bytes() == (b / "report.csv").read_bytes()
        assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
        manifest = json.loads((a / "manifest.json").read_text())
        assert manifest["flags"]["seed"] == 5 and manifest["flags"]["methods"]

    def test_unknown_method(self, tmp_path, capsys):
        assert main(["bench", "--seed", "1", "--methods", "dro", "--out", str(tmp_path)]) == 1
        assert "dro" in capsys.readouterr().err

    def test_seed_required(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["bench", "--out", str(tmp_path)])
        assert exc.value.code == 1

    def test_bench_csv(self, tmp_path):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(300, 2))
        y = X @ [1.0, 0.5] + rng.normal(size=300)
        path = tmp_path / "d.csv"
        np.savetxt(path, np.column_stack([X, y]), delimiter=",", header="a,b,y", comments="")
        assert main(["bench", "--seed", "2", "--csv", str(path), "--features", "a,b",
                     "--label", "y", "--split-column", "a", "--methods", "split,lrqr",
                     "--lambda", "0.2", "--replications", "2", "--out", str(tmp_path)]) == 0
        assert main(["bench", "--seed", "2", "--csv", str(path), "--features", "a,b",
                     "--label", "y", "--split-column", "zzz", "--out", str(tmp_path)]) == 1

    def test_console_script(self, tmp_path):
        out = subprocess.run([sys.executable, "-m", "lrqr.cli", "--version"],
                             capture_output=True, text=True)
        assert out.returncode == 0 and "lrqr" in out.stdout
