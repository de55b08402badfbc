"""Command-line interface: golden outputs, exit codes, strict spec
validation, data file parsing, and seed resolution."""

import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from kembed.cli import run

GOLDENS = Path(__file__).parent / "goldens"

GG_SPEC = {
    "schema_version": 1,
    "kernel": {"family": "gaussian", "lengthscales": [1.0]},
    "measure": {"family": "gaussian", "mean": [0.0], "cov": [1.0]},
}
GU_SPEC = {
    "schema_version": 1,
    "kernel": {"family": "gaussian", "lengthscales": [1.0]},
    "measure": {"family": "uniform_box", "lows": [0.0], "highs": [1.0]},
}
SPHERE_SPEC = {
    "schema_version": 1,
    "kernel": {"family": "sphere_sobolev32"},
    "measure": {"family": "sphere_uniform", "d": 2},
}
STEIN_SPEC = {
    "schema_version": 1,
    "kernel": {
        "family": "stein",
        "base": {"family": "gaussian", "lengthscales": [1.0]},
        "target": {"family": "gaussian", "mean": [0.0], "cov": [1.0]},
        "c": 0.0,
    },
    "measure": {"family": "gaussian", "mean": [0.0], "cov": [1.0]},
}


@pytest.fixture
def spec_file(tmp_path):
    def write(doc, name="spec.json"):
        path = tmp_path / name
        path.write_text(json.dumps(doc))
        return str(path)

    return write


def _golden(name):
    return (GOLDENS / name).read_text()


def _run(capsys, argv):
    code = run(argv)
    return code, capsys.readouterr()


def test_eval_kpp_golden(spec_file, capsys):
    code, out = _run(capsys, ["eval", "--spec", spec_file(GG_SPEC), "--what", "kpp"])
    assert code == 0
    assert out.out == _golden("eval_gg_kpp.json")


def test_eval_kp_golden(spec_file, capsys):
    code, out = _run(
        capsys,
        ["eval", "--spec", spec_file(GU_SPEC), "--what", "kp", "--x", "0.3"],
    )
    assert code == 0
    assert out.out == _golden("eval_gu_kp.json")


def test_eval_kernel_golden(spec_file, capsys):
    code, out = _run(
        capsys,
        ["eval", "--spec", spec_file(GG_SPEC), "--what", "kernel",
         "--x", "0.3", "--y", "0.8"],
    )
    assert code == 0
    assert out.out == _golden("eval_gg_kernel.json")


def test_eval_sphere_golden(spec_file, capsys):
    code, out = _run(
        capsys, ["eval", "--spec", spec_file(SPHERE_SPEC), "--what", "kpp"]
    )
    assert code == 0
    assert out.out == _golden("eval_sphere_kpp.json")


def test_eval_stein_golden(spec_file, capsys):
    code, out = _run(
        capsys, ["eval", "--spec", spec_file(STEIN_SPEC), "--what", "kpp"]
    )
    assert code == 0
    assert out.out == _golden("eval_stein_kpp.json")


def test_verify_golden(spec_file, capsys):
    code, out = _run(capsys, ["verify", "--spec", spec_file(GG_SPEC)])
    assert code == 0
    assert out.out == _golden("verify_gg.json")
    doc = json.loads(out.out)
    assert doc["pass"] is True
    assert len(doc["checks"]) == 21


def test_bq_golden(spec_file, capsys, tmp_path):
    data = tmp_path / "data.csv"
    data.write_text("x1,y\n0.0,1.0\n")
    code, out = _run(
        capsys, ["bq", "--spec", spec_file(GG_SPEC), "--data", str(data)]
    )
    assert code == 0
    assert out.out == _golden("bq_gg.json")


def test_mmd_golden(spec_file, capsys, tmp_path):
    samples = tmp_path / "samples.csv"
    samples.write_text("x1\n0.5\n-0.3\n1.1\n")
    code, out = _run(
        capsys, ["mmd", "--spec", spec_file(GG_SPEC), "--samples", str(samples)]
    )
    assert code == 0
    assert out.out == _golden("mmd_gg.json")


def test_outputs_are_deterministic(spec_file, capsys):
    spec = spec_file(GG_SPEC)
    _, first = _run(capsys, ["verify", "--spec", spec])
    _, second = _run(capsys, ["verify", "--spec", spec])
    assert first.out == second.out


def test_exit_1_verify_failure(spec_file, capsys):
    code, out = _run(
        capsys, ["verify", "--spec", spec_file(GG_SPEC), "--tol", "0"]
    )
    assert code == 1
    assert json.loads(out.out)["pass"] is False


def test_exit_2_unsupported_pair(spec_file, capsys):
    spec = spec_file({
        "schema_version": 1,
        "kernel": {"family": "fbm", "hurst": 0.5},
        "measure": {"family": "gaussian", "mean": [0.0], "cov": [1.0]},
    })
    code, out = _run(capsys, ["eval", "--spec", spec, "--what", "kpp"])
    assert code == 2
    assert "unsupported" in out.err


def test_exit_3_unknown_key_is_named(spec_file, capsys):
    doc = json.loads(json.dumps(GG_SPEC))
    doc["kernel"]["wrong_key"] = 1
    code, out = _run(capsys, ["eval", "--spec", spec_file(doc), "--what", "kpp"])
    assert code == 3
    assert "wrong_key" in out.err


def test_exit_3_schema_version(spec_file, capsys):
    doc = json.loads(json.dumps(GG_SPEC))
    doc["schema_version"] = 2
    code, out = _run(capsys, ["eval", "--spec", spec_file(doc), "--what", "kpp"])
    assert code == 3
    assert "schema_version" in out.err


def test_exit_3_duplicate_nodes(spec_file, capsys, tmp_path):
    data = tmp_path / "dup.csv"
    data.write_text("x1,y\n0.5,1.0\n0.5,2.0\n")
    code, out = _run(
        capsys, ["bq", "--spec", spec_file(GG_SPEC), "--data", str(data)]
    )
    assert code == 3
    assert "coincide" in out.err


def test_exit_3_missing_spec_file(capsys):
    code, out = _run(capsys, ["eval", "--spec", "/nonexistent.json",
                              "--what", "kpp"])
    assert code == 3


def test_exit_4_forced_jitter(spec_file, capsys, tmp_path):
    data = tmp_path / "neardup.csv"
    data.write_text("x1,y\n0.5,1.0\n0.50000000001,2.0\n")
    spec = spec_file(GG_SPEC)
    code, out = _run(
        capsys, ["bq", "--spec", spec, "--data", str(data), "--jitter", "0"]
    )
    assert code == 4
    assert "numerical failure" in out.err
    # without the forced jitter the ladder rescues the same problem
    code, out = _run(capsys, ["bq", "--spec", spec, "--data", str(data)])
    assert code == 0
    assert json.loads(out.out)["jitter_applied"] > 0.0


def test_usage_errors_exit_3():
    with pytest.raises(SystemExit) as exc:
        run(["nope"])
    assert exc.value.code == 3
    with pytest.raises(SystemExit) as exc:
        run(["eval", "--what", "kpp"])
    assert exc.value.code == 3


def test_env_seed_changes_verify_points(spec_file, capsys, monkeypatch):
    spec = spec_file(GG_SPEC)
    _, base = _run(capsys, ["verify", "--spec", spec])
    monkeypatch.setenv("KED_DEFAULT_SEED", "9")
    _, seeded = _run(capsys, ["verify", "--spec", spec])
    assert base.out != seeded.out
    assert json.loads(seeded.out)["pass"] is True


def test_flag_seed_overrides_spec_seed(spec_file, capsys):
    doc = json.loads(json.dumps(GG_SPEC))
    doc["seed"] = 5
    spec = spec_file(doc)
    _, spec_seeded = _run(capsys, ["verify", "--spec", spec])
    _, flag_seeded = _run(capsys, ["verify", "--spec", spec, "--seed", "7"])
    assert spec_seeded.out != flag_seeded.out


def test_spec_seed_overrides_env(spec_file, capsys, monkeypatch):
    doc = json.loads(json.dumps(GG_SPEC))
    doc["seed"] = 5
    spec = spec_file(doc)
    _, base = _run(capsys, ["verify", "--spec", spec])
    monkeypatch.setenv("KED_DEFAULT_SEED", "9")
    _, enved = _run(capsys, ["verify", "--spec", spec])
    assert base.out == enved.out


def test_json_data_routes(spec_file, capsys, tmp_path):
    spec = spec_file(GG_SPEC)
    obj = tmp_path / "data.json"
    obj.write_text(json.dumps({"points": [[0.0]], "values": [1.0]}))
    _, from_obj = _run(capsys, ["bq", "--spec", spec, "--data", str(obj)])
    rows = tmp_path / "rows.json"
    rows.write_text(json.dumps([[0.0, 1.0]]))
    _, from_rows = _run(capsys, ["bq", "--spec", spec, "--data", str(rows)])
    assert from_obj.out == from_rows.out == _golden("bq_gg.json")


def test_json_samples_route(spec_file, capsys, tmp_path):
    spec = spec_file(GG_SPEC)
    arr = tmp_path / "samples.json"
    arr.write_text(json.dumps([[0.5], [-0.3], [1.1]]))
    _, out = _run(capsys, ["mmd", "--spec", spec, "--samples", str(arr)])
    assert out.out == _golden("mmd_gg.json")


def test_multidim_point_parsing(spec_file, capsys):
    spec = spec_file({
        "schema_version": 1,
        "kernel": {"family": "gaussian", "lengthscales": [0.8, 1.5]},
        "measure": {"family": "uniform_box", "lows": [0.0, -1.0],
                    "highs": [2.0, 1.0]},
    })
    code, out = _run(
        capsys, ["eval", "--spec", spec, "--what", "kp", "--x", "0.3,0.2"]
    )
    assert code == 0
    assert json.loads(out.out)["value"] == pytest.approx(
        0.5827847062891051, rel=1e-15
    )


def test_bad_point_format(spec_file, capsys):
    code, out = _run(
        capsys,
        ["eval", "--spec", spec_file(GU_SPEC), "--what", "kp", "--x", "a,b"],
    )
    assert code == 3


def test_bad_csv_header(spec_file, capsys, tmp_path):
    data = tmp_path / "bad.csv"
    data.write_text("foo,bar\n0.0,1.0\n")
    code, out = _run(
        capsys, ["bq", "--spec", spec_file(GG_SPEC), "--data", str(data)]
    )
    assert code == 3


def test_console_script_smoke(spec_file, tmp_path):
    spec = spec_file(GG_SPEC)
    proc = subprocess.run(
        [sys.executable, "-m", "kembed.cli", "eval", "--spec", spec,
         "--what", "kpp"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert proc.stdout == _golden("eval_gg_kpp.json")
