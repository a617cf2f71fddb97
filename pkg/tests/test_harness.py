import json
import math
import re

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from subdiff import (
    CoefficientSet,
    ConvergenceReport,
    ConvergenceRow,
    DomainError,
    ExperimentConfig,
    FitError,
    InnerClockNoise,
    NoiseStream,
    NumericOverflow,
    SchemeConfig,
    SubordinatorSpec,
    coarsen,
    emit_report,
    fit_order,
    read_csv_rows,
    run_convergence,
    simulate_coupled_path,
    simulate_solution,
    simulate_time_change,
)
from subdiff.harness import render_report
from subdiff.schemes import SUBORDINATOR_CHANNEL

SMALL = dict(delta_ref=2.0**-9, deltas=(2.0**-8, 2.0**-6, 2.0**-4), n_paths=6, seed=3)


def test_fit_exact_power_line():
    rows = [(2.0**-k, (2.0**-k) ** 0.75) for k in range(5, 12)]
    s, i, r2 = fit_order(rows)
    assert s == pytest.approx(0.75, abs=1e-12)
    assert i == pytest.approx(0.0, abs=1e-10)
    assert r2 == pytest.approx(1.0, abs=1e-12)


def test_fit_two_points():
    s, _, _ = fit_order([(2.0**-8, 2.0**-4), (2.0**-10, 2.0**-5)])
    assert s == pytest.approx(0.5)


def test_fit_reproduces_published_line():
    rows = [(2.0**-k, 2.0 ** (0.5138 * -k + 4.1982)) for k in range(8, 15)]
    s, i, _ = fit_order(rows)
    assert s == pytest.approx(0.5138, abs=1e-12) and i == pytest.approx(4.1982, abs=1e-10)


def test_fit_constant_errors():
    s, _, _ = fit_order([(2.0**-k, 0.3) for k in range(4, 9)])
    assert s == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize(
    "rows",
    [[], [(0.1, 0.2)], [(0.1, 0.2), (0.05, 0.0)], [(0.1, 0.2), (0.05, -1.0)], [(0.1, 0.2), (0.1, 0.3)]],
)
def test_fit_errors(rows):
    with pytest.raises(FitError):
        fit_order(rows)


@settings(max_examples=100, deadline=None)
@given(st.floats(-2, 3), st.floats(-20, 20))
def test_fit_recovers_any_line(slope, intercept):
    rows = [(2.0**-k, 2.0 ** (slope * -k + intercept)) for k in range(3, 10)]
    s, i, _ = fit_order(rows)
    assert s == pytest.approx(slope, abs=1e-9) and i == pytest.approx(intercept, abs=1e-8)


# --- config ------------------------------------------------------------------------


def test_config_defaults_and_roundtrip():
    c = ExperimentConfig()
    assert c.delta_ref == 2.0**-13 and c.deltas == tuple(2.0**-k for k in range(12, 6, -1))
    assert c.n_paths == 100
    again = ExperimentConfig.from_json(json.dumps(c.to_dict()))
    assert again == c


@pytest.mark.parametrize(
    "bad",
    [
        dict(delta_ref=0.001),
        dict(deltas=(2.0**-13,)),
        dict(deltas=(3 * 2.0**-13,)),
        dict(deltas=()),
        dict(n_paths=0),
        dict(error_mode="vs"),
        dict(error_point="middle"),
        dict(error_mode="closed_form"),  # ex1 has no exact solution
    ],
)
def test_config_validation(bad):
    with pytest.raises(DomainError):
        ExperimentConfig(**bad)


def test_config_rejects_unknown_keys_and_schema():
    d = ExperimentConfig().to_dict()
    with pytest.raises(DomainError, match="unknown"):
        ExperimentConfig.from_dict({**d, "colour": "red"})
    with pytest.raises(DomainError, match="schema"):
        ExperimentConfig.from_dict({**d, "schema": 2})


def test_config_seed_fallback():
    d = ExperimentConfig().to_dict()
    del d["seed"]
    assert ExperimentConfig.from_dict(d, seed=77).seed == 77


# --- coupled runs --------------------------------------------------------------------


def test_coupling_invariant():
    cfg = ExperimentConfig(sde="ex2", **SMALL)
    p = simulate_coupled_path(cfg, 2)
    for m, c in zip(cfg.factors, p.coarse):
        ref = coarsen(p.fine, m)
        assert np.array_equal(c.d_values, ref.d_values) and c.N == ref.N
    # the fine path is the one drawn from stream (seed, index)
    again = simulate_time_change(
        cfg.subordinator, cfg.delta_ref, cfg.T, NoiseStream(3, 2).substream(SUBORDINATOR_CHANNEL), max(cfg.factors)
    )
    assert np.array_equal(again.d_values, p.fine.d_values)


def test_node_error_reproduced_by_hand():
    cfg = ExperimentConfig(sde="tc-gbm", scheme=SchemeConfig("milstein"), error_mode="closed_form", **SMALL)
    p = simulate_coupled_path(cfg, 1)
    stream = NoiseStream(cfg.seed, 1)
    noise = InnerClockNoise.draw(stream, p.fine.N, cfg.delta_ref)
    b = noise.brownian_path()
    gbm = cfg.coefficients()
    for j, m in enumerate(cfg.factors):
        c = p.coarse[j]
        x = simulate_solution(gbm, cfg.scheme, c, increments=noise.coarsen(m)).terminal
        exact_node = gbm.exact(1.0, c.N * c.delta, b[c.N * m])
        exact_T = gbm.exact(1.0, p.fine.N * cfg.delta_ref, b[p.fine.N])
        assert p.node_errors[j] == pytest.approx(abs(x - exact_node), rel=1e-12)
        assert p.terminal_errors[j] == pytest.approx(abs(x - exact_T), rel=1e-12)


def test_run_convergence_shape_and_threads_identical():
    cfg = ExperimentConfig(sde="ex1", **SMALL)
    a = run_convergence(cfg)
    b = run_convergence(cfg, threads=2)
    assert [r.delta for r in a.rows] == sorted(cfg.deltas)
    assert render_report(a, "csv") == render_report(b, "csv")
    assert render_report(a, "json") == render_report(b, "json")
    assert all(r.excluded == 0 for r in a.rows)
    assert all(r.sup_error >= r.error for r in a.rows)


def _stiff_cubic():
    # dX = -X^3 dE: bounded true solution, explicit EM blows up when delta X^2 > 2
    return CoefficientSet(
        F=lambda u, x: -x * x * x,
        G=lambda u, x: 0.1 * x,
        partials={"G_x": lambda u, x: 0.1 + 0 * x},
        name="stiff-cubic",
    )


def test_exclusions_equal_overflows():
    cs = _stiff_cubic()
    cfg = ExperimentConfig(sde=cs, x0=10.0, T=20.0, delta_ref=2.0**-9, deltas=(2.0**-8, 2.0**-2), n_paths=5, seed=1)
    report = run_convergence(cfg)
    counted = [0, 0]
    for i in range(cfg.n_paths):
        p = simulate_coupled_path(cfg, i, cs)
        for j, m in enumerate(cfg.factors):
            noise = InnerClockNoise.draw(NoiseStream(cfg.seed, i), p.fine.N, cfg.delta_ref).coarsen(m)
            try:
                simulate_solution(cs, cfg.scheme, p.coarse[j], x0=10.0, increments=noise)
            except NumericOverflow:
                counted[j] += 1
    assert [r.excluded for r in report.rows] == counted
    assert counted[1] == cfg.n_paths
    assert report.slope is None and "excluded" in report.diagnostic


def test_custom_sets_run_single_process():
    cfg = ExperimentConfig(sde=_stiff_cubic(), x0=0.5, n_paths=2, delta_ref=2.0**-8, deltas=(2.0**-7, 2.0**-5))
    r = run_convergence(cfg, threads=4)
    assert r.slope is not None and r.config is None


# --- output ---------------------------------------------------------------------------


def _toy_report():
    rows = [ConvergenceRow(2.0**-k, 0.123456789012345678 * 2.0 ** (-0.5 * k), k % 2) for k in range(7, 13)]
    rows.sort(key=lambda r: r.delta)
    s, i, r2 = fit_order([(r.delta, r.error) for r in rows])
    return ConvergenceReport(rows, s, i, r2)


def test_csv_roundtrip(tmp_path):
    rep = _toy_report()
    path = tmp_path / "r.csv"
    emit_report(rep, "csv", path)
    text = path.read_text()
    assert text.splitlines()[0] == "delta,log2_delta,error,log2_error,excluded"
    back = read_csv_rows(text)
    for (d, e, x), r in zip(back, rep.rows):
        assert d == r.delta and x == r.excluded
        assert e == pytest.approx(r.error, rel=1e-14)
        assert float(f"{e:.15g}") == float(f"{r.error:.15g}")


def test_svg_structure(tmp_path):
    rep = _toy_report()
    path = tmp_path / "r.svg"
    emit_report(rep, "svg", path)
    svg = path.read_text()
    assert len(re.findall(r"<circle\b", svg)) == len(rep.rows)
    assert len(re.findall(r"<line\b", svg)) == 1
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")


def test_json_fields(tmp_path):
    path = tmp_path / "r.json"
    emit_report(_toy_report(), "json", path)
    d = json.loads(path.read_text())
    assert {"slope", "r_squared", "intercept", "rows"} <= set(d)


def test_write_failure_names_path(tmp_path):
    bad = tmp_path / "missing-dir" / "r.csv"
    with pytest.raises(OSError, match="missing-dir"):
        emit_report(_toy_report(), "csv", bad)


def test_unknown_format():
    with pytest.raises(DomainError):
        render_report(_toy_report(), "xlsx")
