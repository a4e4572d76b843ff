import json
import os
import subprocess
import sys
from importlib import resources

import jsonschema
import pytest

from riskderiv.cli import main

FOUR_CSV = "l1,l2\n1,2\n3,1\n2,4\n5,3\n"


@pytest.fixture
def four_csv(tmp_path):
    p = tmp_path / "four.csv"
    p.write_text(FOUR_CSV)
    return str(p)


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def schema(name):
    return json.loads(resources.files("riskderiv").joinpath(f"schemas/{name}.schema.json").read_text())


def test_risk_four(four_csv, capsys):
    code, out, _ = run(["risk", "--scenarios", four_csv, "--weights", "1,1", "--alpha", "0.7"], capsys)
    assert code == 0
    rep = json.loads(out)
    assert rep["var"] == 6.0
    assert rep["es"] == pytest.approx(23 / 3, abs=1e-12)
    assert rep["meta"]["n"] == 4 and rep["meta"]["seed"] == 0


def test_allocate_four(four_csv, capsys):
    code, out, _ = run(["allocate", "--scenarios", four_csv, "--weights", "1,1", "--alpha", "0.7"], capsys)
    rep = json.loads(out)
    assert code == 0
    assert rep["components"] == pytest.approx([4.5, 19 / 6], abs=1e-12)
    assert rep["total"] == pytest.approx(rep["value"], abs=1e-12)


def test_tail_pareto(capsys):
    code, out, _ = run(["tail", "--model", "pareto", "--kappa", "3", "--ratio", "es-var"], capsys)
    rep = json.loads(out)
    assert code == 0
    assert rep["ladder"]["target"] == 1.5
    assert rep["ladder"]["ratios"] == pytest.approx([1.5] * 5, abs=1e-12)


SMALL = ["--model", "student_t", "--d", "3", "--n", "20000", "--seed", "3"]
CASES = {
    "risk": ["risk", *SMALL],
    "grad": ["grad", *SMALL, "--mode", "kernel", "--measure", "var"],
    "allocate": ["allocate", *SMALL],
    "hessian": ["hessian", *SMALL],
    "convexity": ["convexity", *SMALL],
    "identity": ["identity", *SMALL, "--t", "0.5"],
    "tail": ["tail", "--model", "mvt", "--kappa", "4", "--n", "20000", "--ratio", "correlation",
             "--alphas", "0.9,0.99"],
    "optimize": ["optimize", "--model", "gaussian", "--mu=-0.05,-0.08,-0.12", "--target", "-0.09"],
    "sample": ["sample", *SMALL],
}


@pytest.mark.parametrize("name", sorted(CASES))
def test_schema_valid(name, capsys):
    code, out, _ = run(CASES[name], capsys)
    assert code == 0
    jsonschema.validate(json.loads(out), schema(name))


@pytest.mark.parametrize("argv", [
    ["tail", "--model", "iid_pareto", "--n", "5000", "--ratio", "hill"],
    ["tail", "--model", "pareto", "--n", "20000", "--ratio", "second-moment", "--alphas", "0.9,0.99"],
    ["hessian", "--model", "gaussian", "--n", "50", "--mode", "discrete", "--alpha", "0.9"],
    ["optimize", "--model", "gaussian", "--mu=-0.05,-0.08,-0.12", "--target", "-0.09", "--path", "sample",
     "--n", "20000"],
])
def test_schema_valid_variants(argv, capsys):
    code, out, _ = run(argv, capsys)
    assert code == 0
    jsonschema.validate(json.loads(out), schema(argv[0]))


@pytest.mark.parametrize("name", ["risk", "grad", "identity", "sample"])
def test_threads_byte_identical(name, capsys):
    outs = []
    for threads in ("1", "4"):
        code, out, _ = run([*CASES[name], "--threads", threads], capsys)
        assert code == 0
        rep = json.loads(out)
        rep["meta"].pop("threads")
        outs.append(json.dumps(rep, sort_keys=True))
    assert outs[0] == outs[1]


def test_repeat_runs_byte_identical(capsys):
    a = run(CASES["identity"], capsys)[1]
    b = run(CASES["identity"], capsys)[1]
    assert a == b


def test_threads_env_var():
    argv = [sys.executable, "-m", "riskderiv", "risk", "--model", "gaussian", "--n", "50000", "--seed", "1"]
    outs = []
    for threads in ("1", "3"):
        env = dict(os.environ, RISKDERIV_THREADS=threads)
        res = subprocess.run(argv, capture_output=True, text=True, env=env, check=True)
        rep = json.loads(res.stdout)
        assert rep["meta"]["threads"] == int(threads)
        rep["meta"].pop("threads")
        outs.append(json.dumps(rep, sort_keys=True))
    assert outs[0] == outs[1]


@pytest.mark.parametrize("argv,needle", [
    (["risk", "--scenarios", "nope.csv"], "nope.csv"),
    (["risk", "--model", "gaussian", "--n", "100", "--weights", "1,2,3"], "--weights"),
    (["risk", "--model", "gaussian", "--bogus"], "--bogus"),
    (["risk", "--model", "gaussian", "--alpha", "1.5"], "alpha"),
    (["risk", "--model", "gaussian", "--mu", "0,0", "--cov", "1,0,0;0,1,0;0,0,1"], "--cov"),
    (["risk"], "--scenarios"),
    (["nosuchcommand"], "nosuchcommand"),
    (["tail", "--model", "pareto", "--kappa", "2", "--ratio", "second-moment"], "κ>2"),
])
def test_input_errors_exit_1(argv, needle, capsys):
    code, out, err = run(argv, capsys)
    assert code == 1
    assert out == ""
    assert needle in err
    assert len(err.strip().splitlines()) == 1


def test_dimension_mismatch_in_file(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n3\n")
    code, _, err = run(["risk", "--scenarios", str(p)], capsys)
    assert code == 1
    assert "bad.csv" in err and "line 3" in err


def test_numerical_flags_exit_2(tmp_path, capsys):
    # rows (1,3) and (3,1) share the loss 4 at the quantile but separate under any perturbation
    p = tmp_path / "tie.csv"
    p.write_text("a,b\n1,3\n3,1\n0,0\n5,5\n")
    code, out, _ = run(["hessian", "--scenarios", str(p), "--mode", "discrete", "--alpha", "0.5"], capsys)
    assert code == 2
    assert json.loads(out)["tie_point"] is True
    code, out, _ = run(["optimize", "--model", "gaussian", "--mu=-0.05,-0.08,-0.12", "--target", "-0.09",
                        "--cov", "0.04,0.006,0.002;0.006,0.09,0.01;0.002,0.01,0.16", "--max-iter", "1"], capsys)
    assert code == 2
    assert json.loads(out)["converged"] is False


def test_text_format(four_csv, capsys):
    code, out, _ = run(["risk", "--scenarios", four_csv, "--alpha", "0.7", "--format", "text"], capsys)
    assert code == 0
    lines = dict(line.split(None, 1) for line in out.splitlines() if len(line.split(None, 1)) == 2)
    assert float(lines["var"]) == 6.0
    assert float(lines["es"]) == pytest.approx(23 / 3, rel=1e-9)


def test_sample_roundtrip(tmp_path, capsys):
    out_file = str(tmp_path / "s.csv")
    code, _, _ = run(["sample", "--model", "gaussian", "--n", "1000", "--out", out_file], capsys)
    assert code == 0
    code, out, _ = run(["risk", "--scenarios", out_file], capsys)
    assert code == 0
    code2, out2, _ = run(["risk", "--model", "gaussian", "--n", "1000"], capsys)
    a, b = json.loads(out), json.loads(out2)
    assert a["es"] == pytest.approx(b["es"], rel=1e-12)


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "riskderiv", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "riskderiv" in res.stdout
