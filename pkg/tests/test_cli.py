import json
import subprocess
import sys

import numpy as np
import pytest

from bures_barycenter.cli import main
from bures_barycenter.diagnostics import DEMO_A, DEMO_B, InequalityReport
from bures_barycenter.experiments import regular_recentred_dataset
from bures_barycenter.geometry import BuresDistribution, GaussianMeasure, w2_distance_sq
from bures_barycenter.io import read_measure, write_dataset
from bures_barycenter.solvers import SolverTrace


@pytest.fixture
def files(tmp_path):
    paths = {}

    def put(name, obj):
        paths[name] = tmp_path / f"{name}.json"
        write_dataset(obj, paths[name])
        return str(paths[name])

    put("q14", BuresDistribution(np.array([[[1.0]], [[4.0]]])))
    put("one", GaussianMeasure(DEMO_A, [0.5, -0.5]))
    put("a1", GaussianMeasure([[1.0]]))
    put("b4", GaussianMeasure([[4.0]]))
    put("A", GaussianMeasure(DEMO_A))
    put("init2", GaussianMeasure(np.diag([3.0, 0.1])))
    put("B", GaussianMeasure(DEMO_B))
    Q, _ = regular_recentred_dataset(3, 12, 0.5, np.random.default_rng(0))
    put("regular", Q)
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"dim": 2, "atoms": [
        {"weight": 0.5, "mean": [0, 0], "cov": [[1, 0], [0, 1]]},
        {"weight": 0.5, "mean": [0, 0], "cov": [[1, 0.3], [0, 1]]}]}))
    paths["bad"] = bad
    paths["dir"] = tmp_path
    return {k: str(v) for k, v in paths.items()}


class TestBarycenter:
    def test_scalar_fixed_point(self, files, capsys):
        trace = files["dir"] + "/trace.csv"
        assert main(["barycenter", "gd", "--input", files["q14"], "--trace", trace]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["atoms"][0]["cov"] == [[2.25]]
        t = SolverTrace.from_csv(open(trace).read())
        assert t.iters == [0, 1] and t.objective[1] == 0.125

    def test_single_atom_one_iteration(self, files, capsys):
        out = files["dir"] + "/final.json"
        code = main(["barycenter", "gd", "--input", files["one"], "--init", files["init2"],
                     "--out", out, "--trace", files["dir"] + "/t.csv"])
        assert code == 0
        assert w2_distance_sq(read_measure(out), read_measure(files["one"])) <= 1e-10
        assert SolverTrace.from_csv(open(files["dir"] + "/t.csv").read()).iters[-1] == 1

    def test_asymmetric_exit_1_names_atom(self, files, capsys):
        assert main(["barycenter", "gd", "--input", files["bad"]]) == 1
        assert "atom 1" in capsys.readouterr().err

    def test_max_iters_exit_2(self, files):
        assert main(["barycenter", "gd", "--input", files["regular"], "--max-iters", "1", "--tol", "0"]) == 2

    @pytest.mark.parametrize("method", ["sgd", "avg-sgd", "sgd-replace"])
    def test_stochastic(self, files, capsys, method):
        args = ["barycenter", method, "--input", files["regular"], "--schedule", "exp:c=0.7",
                "--ref", "fixed-point", "--seed", "4", "--trace", files["dir"] + "/s.csv"]
        assert main(args) == 0
        first = capsys.readouterr().out
        assert main(args) == 0
        assert capsys.readouterr().out == first

    def test_init_atom(self, files, capsys):
        assert main(["barycenter", "gd", "--input", files["q14"], "--init", "atom:1"]) == 0
        assert main(["barycenter", "gd", "--input", files["q14"], "--init", "atom:5"]) == 1


class TestDiagnose:
    def test_all_suites_pass(self, files, capsys):
        assert main(["diagnose", "--input", files["regular"], "--zeta", "0.125", "--trials", "3"]) == 0
        lines = capsys.readouterr().out.splitlines()
        reps = [InequalityReport.from_line(l) for l in lines]
        assert len(reps) == 3 * 6 and all(r.satisfied for r in reps)
        assert {r.name for r in reps} >= {"pl", "variance", "smoothness", "integrated_pl"}

    def test_zeta_too_large_exit_3(self, files, capsys):
        assert main(["diagnose", "--input", files["regular"], "--zeta", "0.99"]) == 3
        assert "atom 0" in capsys.readouterr().err

    def test_outside_unit_ball_exit_3(self, files):
        assert main(["diagnose", "--input", files["q14"]]) == 3

    def test_point(self, files, capsys):
        pt = files["dir"] + "/pt.json"
        write_dataset(GaussianMeasure(0.7 * np.eye(3)), pt)
        assert main(["diagnose", "--input", files["regular"], "--zeta", "0.125", "--point", pt,
                     "--suite", "pl", "--trials", "2"]) == 0

    def test_demo(self, capsys):
        assert main(["diagnose", "--demo-nonconvexity"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "s,bures_w2_sq,euclidean_w2_sq" and len(out) == 102


class TestDistance:
    def test_values(self, files, capsys):
        assert main(["distance", "--a", files["a1"], "--b", files["b4"]]) == 0
        assert capsys.readouterr().out == "w2_sq\t1.0\nw2\t1.0\n"
        assert main(["distance", "--a", files["a1"], "--b", files["a1"]]) == 0
        assert capsys.readouterr().out.startswith("w2_sq\t0.0")

    def test_symmetric(self, files, capsys):
        main(["distance", "--a", files["A"], "--b", files["B"]])
        ab = float(capsys.readouterr().out.split()[1])
        main(["distance", "--a", files["B"], "--b", files["A"]])
        ba = float(capsys.readouterr().out.split()[1])
        assert abs(ab - ba) <= 1e-12

    def test_missing_file(self, files):
        assert main(["distance", "--a", "/nonexistent.json", "--b", files["a1"]]) == 1


class TestExperiment:
    def test_smoke(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"dim": 2, "n": 10, "replicates": 1}))
        assert main(["experiment", "--config", str(cfg), "--variant", "sgd", "--out", str(tmp_path / "o")]) == 0
        summary = json.loads((tmp_path / "o" / "summary_sgd.json").read_text())
        assert "slope" in summary and "r_squared" in summary and "fit_window" in summary
        assert (tmp_path / "o" / "curve_sgd.csv").read_text().startswith("iter,mean_error,lo95,hi95")

    def test_poorly_conditioned_warns(self, tmp_path, capsys):
        assert main(["experiment", "--preset", "poorly_conditioned", "--n", "10", "--replicates", "1",
                     "--out", str(tmp_path)]) == 0
        assert "outside" in capsys.readouterr().err
        assert json.loads((tmp_path / "summary_sgd.json").read_text())["outside_regular_set"]

    def test_bad_config_names_field(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"n": -3}))
        assert main(["experiment", "--config", str(cfg), "--out", str(tmp_path)]) == 1
        assert "'n'" in capsys.readouterr().err


def test_console_entry_point(files):
    proc = subprocess.run([sys.executable, "-m", "bures_barycenter.cli", "distance", "--a", files["a1"],
                           "--b", files["b4"]], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("w2_sq\t1.0")
