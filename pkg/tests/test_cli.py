import json
import subprocess
import sys

import pytest

from subdiff import ExperimentConfig, cli_main


def run(argv, capsys):
    code = cli_main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_rate_example(capsys):
    code, out, _ = run(["rate", "--scheme", "em", "--beta", "0.8", "--q", "0.5", "--theta", "1"], capsys)
    assert code == 0
    assert "order 0.5" in out and "(2/3,1)" in out and "VALID" in out


def test_rate_out_of_range_is_assumption_violation(capsys):
    code, out, _ = run(["rate", "--scheme", "em", "--beta", "0.6", "--q", "0.5"], capsys)
    assert code == 2 and "OUT_OF_RANGE" in out


def test_moments_infinite(capsys):
    code, out, _ = run(["moments", "--beta", "0.3", "--p", "2", "--t", "1", "--samples", "1000"], capsys)
    d = json.loads(out)
    assert code == 0 and d["classifier_verdict"] == "INFINITE"
    assert {"query", "probe_hint", "running_means"} <= set(d)


def test_moments_inverse_power_skips_probe(capsys):
    code, out, _ = run(["moments", "--beta", "0.8", "--p", "1", "--kind", "inverse_power"], capsys)
    assert code == 0 and json.loads(out)["classifier_verdict"] == "INFINITE"


@pytest.mark.parametrize(
    "argv",
    [["--bogus"], ["rate", "--scheme", "em"], [], ["nosuch"], ["--threads", "0", "rate", "--scheme", "em", "--beta", "0.8"]],
)
def test_usage_errors(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == 1 and err


def test_bad_domain_is_usage(capsys):
    code, _, err = run(["rate", "--scheme", "em", "--beta", "1.5"], capsys)
    assert code == 1 and "invalid input" in err


def test_milstein_with_H_is_assumption_violation(capsys):
    code, _, err = run(["simulate", "--sde", "ex1", "--scheme", "milstein"], capsys)
    assert code == 2 and "H" in err


def test_overflow_is_numeric_failure(capsys):
    code, _, err = run(["simulate", "--sde", "ex1", "--x0", "1e308", "--delta", "0.25", "--T", "5"], capsys)
    assert code == 3 and "numeric failure" in err


def test_simulate_csv_and_seed_env(capsys, monkeypatch):
    code, a, _ = run(["--seed", "5", "simulate", "--delta", "0.0625"], capsys)
    assert code == 0 and a.splitlines()[0] == "n,tau_n,E_delta,X_delta"
    monkeypatch.setenv("SUBDIFF_SEED", "5")
    _, b, _ = run(["simulate", "--delta", "0.0625"], capsys)
    assert a == b
    monkeypatch.setenv("SUBDIFF_SEED", "6")
    _, c, _ = run(["simulate", "--delta", "0.0625"], capsys)
    assert c != a
    monkeypatch.setenv("SUBDIFF_SEED", "six")
    assert run(["simulate"], capsys)[0] == 1


def test_exit_bracket(capsys):
    code, out, _ = run(["--seed", "1", "exit-bracket", "--samples", "500", "--delta", "0.0078125"], capsys)
    b = json.loads(out)["bracket"]
    assert code == 0 and b["lower"] <= b["upper"]


def _small_config(tmp_path, **kw):
    cfg = ExperimentConfig(sde="ex2", delta_ref=2.0**-8, deltas=(2.0**-7, 2.0**-5, 2.0**-3), n_paths=4, seed=9, **kw)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    return path


@pytest.mark.parametrize("fmt", ["csv", "json", "svg"])
def test_convergence_formats(tmp_path, capsys, fmt):
    cfg = _small_config(tmp_path)
    out = tmp_path / f"r.{fmt}"
    code, _, _ = run(["convergence", "--config", str(cfg), "--out", str(out), "--format", fmt], capsys)
    assert code == 0 and out.stat().st_size > 0


def test_convergence_deterministic_and_threaded(tmp_path, capsys):
    cfg = _small_config(tmp_path)
    _, a, _ = run(["convergence", "--config", str(cfg)], capsys)
    _, b, _ = run(["--threads", "2", "convergence", "--config", str(cfg)], capsys)
    _, c, _ = run(["--seed", "10", "convergence", "--config", str(cfg)], capsys)
    assert a == b and a != c


def test_convergence_bad_config(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"schema": 1, "whatever": 3}')
    assert run(["convergence", "--config", str(p)], capsys)[0] == 1
    p.write_text("{not json")
    assert run(["convergence", "--config", str(p)], capsys)[0] == 1
    assert run(["convergence", "--config", str(tmp_path / "nope.json")], capsys)[0] == 1


def test_module_entry_point():
    r = subprocess.run(
        [sys.executable, "-m", "subdiff", "rate", "--scheme", "milstein", "--beta", "0.8", "--q", "0.5", "--qtilde", "0"],
        capture_output=True,
        text=True,
    )
    assert r.returncode == 0 and "(2/3,1)" in r.stdout
