import json
import subprocess
import sys

import numpy as np
import pytest

from saop.bench import LTI_REPORTED_WEIGHTS
from saop.cli import CONVERGENCE_COLUMNS, ConfigError, ExperimentConfig, main


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def static_config(tmp_path, **saop):
    return {
        "problem": {"name": "static_quadratic", "overrides": {"w_star": [0.3, -0.2, 0.5]}},
        "saop": {"epsilon": 1e-4, **saop},
        "seed": 1,
        "output_dir": str(tmp_path / "out"),
    }


def test_run_static_writes_artifacts(tmp_path, capsys):
    cfg = write(tmp_path / "c.json", static_config(tmp_path))
    assert main(["run", "-c", cfg]) == 0
    out = tmp_path / "out"
    result = json.loads((out / "result.json").read_text())
    assert result["j_star"] <= 1e-3
    assert result["converged"] and result["seed"] == 1
    for key in ("w_star", "iterations", "total_samples", "wall_time", "config"):
        assert key in result
    header = (out / "convergence.csv").read_text().splitlines()[0]
    assert header.split(",") == CONVERGENCE_COLUMNS
    rows = (out / "mu_trace.csv").read_text().splitlines()
    assert rows[0] == "k,mu1,mu2,mu3" and len(rows) == result["iterations"] + 1
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 1 and manifest["version"]
    assert manifest["config"]["saop"]["epsilon"] == 1e-4
    assert manifest["config"]["saop"]["n_initial"] == 50


def test_manifest_reproduces_run(tmp_path):
    cfg = write(tmp_path / "c.json", static_config(tmp_path))
    main(["run", "-c", cfg])
    first = json.loads((tmp_path / "out" / "result.json").read_text())
    echo = json.loads((tmp_path / "out" / "manifest.json").read_text())["config"]
    echo["output_dir"] = str(tmp_path / "again")
    main(["run", "-c", write(tmp_path / "echo.json", echo)])
    second = json.loads((tmp_path / "again" / "result.json").read_text())
    for body in (first, second):
        body.pop("wall_time")
        body["config"].pop("output_dir")
    assert first == second


def test_unknown_key_exits_2_and_names_it(tmp_path, capsys):
    bad = static_config(tmp_path)
    bad["saop"]["rhoo"] = 0.2
    assert main(["run", "-c", write(tmp_path / "c.json", bad)]) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "invalid_config" and err["key"] == "saop.rhoo"


@pytest.mark.parametrize(
    "patch, key",
    [
        ({"problem": {"name": "nope"}}, "problem.name"),
        ({"problem": {"name": "dubins_car", "overrides": {"speed": 3}}}, "problem.overrides.speed"),
        ({"robust": {"beta": 2.0, "gamma": 1}}, "robust.gamma"),
        ({"runs": 0}, "runs"),
        ({"extra": True}, "extra"),
    ],
)
def test_strict_parsing(patch, key, tmp_path):
    data = {**static_config(tmp_path), **patch}
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict(data, env={})
    assert info.value.key == key


def test_lambda_alias_and_env_seed(tmp_path):
    data = static_config(tmp_path, **{"lambda": 0.25})
    cfg = ExperimentConfig.from_dict(data, env={"SAOP_SEED": "17"})
    assert cfg.saop.lam == 0.25 and cfg.seed == 17 and cfg.saop.seed == 17


def test_robust_run_records_rejections(tmp_path):
    data = {
        "problem": {"name": "lti_nonquadratic", "overrides": {"horizon": 2.0}},
        "saop": {"max_iterations": 3, "n_initial": 20},
        "robust": {"beta": 2.0, "rho_max": 0.5},
        "output_dir": str(tmp_path / "out"),
    }
    main(["run", "-c", write(tmp_path / "c.json", data)])
    result = json.loads((tmp_path / "out" / "result.json").read_text())
    assert len(result["rejected_robust"]) == result["iterations"] == 3
    assert all(isinstance(r, int) for r in result["rejected_robust"])
    assert (tmp_path / "out" / "trajectory.csv").exists()


def test_multirun_summary_and_histogram(tmp_path):
    cfg = write(tmp_path / "c.json", static_config(tmp_path))
    assert main(["multirun", "-c", cfg, "--runs", "10"]) == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    costs = np.array(summary["costs"])
    assert summary["runs"] == 10 and summary["converged"] == 10
    assert summary["seeds"] == list(range(1, 11))
    assert summary["std"] <= 1e-3
    assert abs(summary["mean"] - costs.mean()) <= 1e-12
    assert summary["min"] == costs.min() and summary["max"] == costs.max()
    rows = (tmp_path / "out" / "histogram.csv").read_text().splitlines()
    assert rows[0] == "bin_lower,bin_upper,count"
    assert sum(int(r.split(",")[2]) for r in rows[1:]) == 10
    per_run = json.loads((tmp_path / "out" / "run_003" / "result.json").read_text())
    assert per_run["j_star"] == costs[3]


def test_multirun_same_seed_audit(tmp_path):
    cfg = write(tmp_path / "c.json", static_config(tmp_path))
    assert main(["multirun", "-c", cfg, "--runs", "2", "--same-seed"]) == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["costs"][0] == summary["costs"][1]


def test_multirun_parallel_matches_serial(tmp_path):
    base = static_config(tmp_path)
    assert main(["multirun", "-c", write(tmp_path / "a.json", base), "--runs", "3"]) == 0
    serial = json.loads((tmp_path / "out" / "summary.json").read_text())["costs"]
    base["output_dir"] = str(tmp_path / "par")
    assert main(["multirun", "-c", write(tmp_path / "b.json", base), "--runs", "3", "--jobs", "2"]) == 0
    assert json.loads((tmp_path / "par" / "summary.json").read_text())["costs"] == serial


def lti_config(tmp_path, **robust):
    return write(
        tmp_path / "lti.json",
        {"problem": {"name": "lti_nonquadratic"}, "robust": robust or None, "output_dir": str(tmp_path / "v")},
    )


def test_verify_reported_weights_pass(tmp_path, capsys):
    w = write(tmp_path / "w.json", {"w_star": LTI_REPORTED_WEIGHTS.tolist()})
    assert main(["verify", "-c", lti_config(tmp_path), "-w", w, "--disturbances", "3"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("PASS")
    assert sum(line.startswith("t=") for line in lines) == 101
    summary = json.loads(lines[-1])
    assert summary["passed"] and summary["within_envelope"]


def test_verify_positive_gains_fail(tmp_path, capsys):
    w = write(tmp_path / "w.json", [1.0, 1.0, 0.0, 0.0, 0.0, 0.0])
    assert main(["verify", "-c", lti_config(tmp_path), "-w", w, "--disturbances", "1"]) == 1
    assert capsys.readouterr().out.startswith("FAIL")


def test_verify_without_disturbance_has_zero_deviation(tmp_path, capsys):
    w = write(tmp_path / "w.json", LTI_REPORTED_WEIGHTS.tolist())
    assert main(["verify", "-c", lti_config(tmp_path, rho_max=0.0), "-w", w, "--disturbances", "2"]) == 0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["max_deviation"] == 0.0 and summary["ultimate_bound"] == 0.0


def test_verify_rejects_dimension_mismatch(tmp_path, capsys):
    w = write(tmp_path / "w.json", [1.0, 2.0])
    assert main(["verify", "-c", lti_config(tmp_path), "-w", w]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "dimension_mismatch"


def test_console_entry_point(tmp_path):
    cfg = write(tmp_path / "c.json", {"problem": {"name": "static_quadratic"}, "bogus": 1})
    proc = subprocess.run([sys.executable, "-m", "saop.cli", "run", "-c", cfg], capture_output=True, text=True)
    assert proc.returncode == 2
    assert json.loads(proc.stderr)["key"] == "bogus"
