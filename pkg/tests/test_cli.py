import json
import subprocess
import sys

import numpy as np
import pytest

from ocnlme import io

FAST = ["--outer-maxfev", "40"]


def run(*args, env=None, cwd=None):
    proc = subprocess.run([sys.executable, "-m", "ocnlme", *map(str, args)], capture_output=True, text=True,
                          env=env, cwd=cwd)
    return proc


def ok(*args, **kw):
    proc = run(*args, **kw)
    assert proc.returncode == 0, proc.stderr
    return json.loads(proc.stdout)


@pytest.fixture(scope="module")
def cohort(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    ok("simulate", "--model", "linear2d", "--n", 4, "--seed", 3, "--out", out)
    return out


def test_simulate_outputs(cohort):
    pop = io.load_dataset(cohort / "data.csv", d_obs=1)
    truth = io.read_json(cohort / "truth.json")
    assert len(pop) == 4 and len(truth["subjects"]) == 4
    assert truth["model"] == "linear2d" and truth["seed"] == 3


def test_fit_from_truth(cohort, tmp_path):
    res = ok("fit", "--data", cohort / "data.csv", "--start-at", cohort / "truth.json", "--out", tmp_path,
             "--controls", *FAST)
    doc = io.read_json(res["fit"])
    assert np.all(np.isfinite(doc["theta"])) and np.all(np.asarray(doc["psi_sd"]) > 0)
    assert (tmp_path / "controls.csv").is_file() and (tmp_path / "controls_summary.csv").is_file()


def test_cv_singleton_grid(cohort, tmp_path):
    res = ok("cv", "--data", cohort / "data.csv", "--u-grid", "10", "--out", tmp_path, *FAST)
    assert res["U_best"] == [[10.0, 0.0], [0.0, 10.0]]
    header, rows = io.read_table(tmp_path / "cv.csv")
    assert header == ["U", "EP"] and rows[0][0] == "10"


def test_mc_noiseless(tmp_path):
    ok("mc", "--runs", 1, "--n", 3, "--sigma", 0, "--psi", 0, "--out", tmp_path, *FAST)
    header, rows = io.read_table(tmp_path / "mc.csv")
    assert header == ["param", "mse", "bias", "emp_var", "est_var", "coverage"]
    assert [r[0] for r in rows] == ["theta_1", "theta_2", "sd_theta_1"]


def test_exit_codes(cohort, tmp_path):
    p = run("fit", "--data", tmp_path / "nope.csv")
    assert p.returncode == 3 and json.loads(p.stderr)["error"] == "InputFileError"
    assert run("fit", "--bogus").returncode == 2
    assert run().returncode == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("subject,time,y1\n1,0,x\n")
    p = run("fit", "--data", bad)
    assert p.returncode == 4 and "row 2" in json.loads(p.stderr)["message"]
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"nonsense": 1}))
    assert run("simulate", "--config", cfg, "--out", tmp_path).returncode == 4
    assert run("simulate", "--model", "insulin", "--jobs", 0, "--out", tmp_path).returncode == 4


def test_config_file_and_flag_precedence(tmp_path):
    from ocnlme.cli import build_parser, resolve_options

    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 9, "n": 5, "mesh-refine": 4}))
    opts = resolve_options(build_parser().parse_args(["simulate", "--config", str(cfg), "--seed", "1"]))
    assert (opts["seed"], opts["n"], opts["mesh_refine"]) == (1, 5, 4)


def test_jobs_from_environment(monkeypatch):
    from ocnlme.cli import build_parser, resolve_options

    monkeypatch.setenv("OCNLME_JOBS", "3")
    assert resolve_options(build_parser().parse_args(["simulate"]))["jobs"] == 3
    assert resolve_options(build_parser().parse_args(["simulate", "--jobs", "2"]))["jobs"] == 2
