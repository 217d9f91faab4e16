import csv
import json
import math

import numpy as np
import pytest

import ppes.harness as harness
from ppes.baselines import PolicyConfig
from ppes.cli import main, make_figure_dataset
from ppes.gp import GpHyper, kernel, unit_domain
from ppes.harness import (
    ExperimentConfig,
    RegretTrace,
    aggregate,
    recommend,
    run_experiment,
    run_many,
    worker_count,
    write_csv,
    write_summary,
)
from ppes.objectives import objective_by_name


def tiny_cfg(**kw):
    base = dict(
        objective="cosines",
        policy=PolicyConfig("RANDOM", Q=2),
        T=2,
        repeats=1,
        seed=3,
        M=3,
        init_count=3,
    )
    base.update(kw)
    return ExperimentConfig(**base)


def test_config_validation():
    with pytest.raises(ValueError):
        tiny_cfg(T=0)
    with pytest.raises(ValueError):
        tiny_cfg(repeats=0)


def test_run_experiment_is_deterministic_and_consistent():
    cfg = tiny_cfg()
    tr1 = run_experiment(cfg, np.random.default_rng(5))
    tr2 = run_experiment(cfg, np.random.default_rng(5))
    assert np.array_equal(tr1.recommendations, tr2.recommendations)
    assert np.array_equal(tr1.regrets, tr2.regrets)
    assert np.array_equal(tr1.batches, tr2.batches)
    assert not tr1.aborted
    assert tr1.recommendations.shape == (2, 2)
    assert tr1.batches.shape == (2, 2, 2)
    assert np.all(tr1.wall_ms > 0)
    # the stored regret is recomputable from the recommendation
    obj = objective_by_name("cosines")
    for t in range(2):
        want = abs(obj.evaluate(tr1.recommendations[t]) - obj.known_max)
        assert tr1.regrets[t] == pytest.approx(want, abs=1e-12)


def test_policy_failure_aborts_with_context(monkeypatch):
    calls = {"n": 0}

    def boom(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] >= 2:
            raise RuntimeError("synthetic policy failure")
        return unit_domain(2).uniform(np.random.default_rng(0), 2)

    monkeypatch.setattr(harness, "select_batch", boom)
    tr = run_experiment(tiny_cfg(T=3), np.random.default_rng(1))
    assert tr.aborted
    assert "iteration 2" in tr.error and "synthetic policy failure" in tr.error
    assert np.isfinite(tr.regrets[0])
    assert np.all(np.isnan(tr.regrets[1:]))


def test_run_many_spawns_deterministic_repeats(monkeypatch):
    monkeypatch.setenv("PPES_WORKERS", "1")
    cfg = tiny_cfg(repeats=2, T=1)
    a = run_many(cfg)
    b = run_many(cfg)
    assert len(a) == 2
    for ta, tb in zip(a, b):
        assert np.array_equal(ta.regrets, tb.regrets)
    # different repeats see different streams
    assert not np.array_equal(a[0].batches, a[1].batches)


def make_trace(regrets, aborted=False):
    T = len(regrets)
    return RegretTrace(
        recommendations=np.zeros((T, 2)),
        regrets=np.asarray(regrets, dtype=float),
        wall_ms=np.ones(T),
        batches=np.zeros((T, 2, 2)),
        aborted=aborted,
    )


def test_aggregate_medians_and_bootstrap_band():
    traces = [
        make_trace([1.0, 2.0]),
        make_trace([3.0, 4.0]),
        make_trace([5.0, 6.0]),
        make_trace([np.nan, np.nan], aborted=True),
    ]
    rep = aggregate(traces, n_boot=4000, seed=1)
    assert rep["completed"] == 3 and rep["aborted"] == 1
    assert rep["median_regret"] == [3.0, 4.0]
    assert rep["final_median_regret"] == 4.0
    # resampling 3 traces: the median is 1/3/5 w.p. 7/27, 13/27, 7/27, so the
    # bootstrap sd converges to sqrt(56/27) at either iteration
    sd_exact = math.sqrt(56.0 / 27.0)
    for t in range(2):
        got = rep["median_regret"][t] - rep["band_lower"][t]
        assert abs(got - sd_exact) < 0.08
        assert rep["band_upper"][t] - rep["median_regret"][t] == pytest.approx(got)


def test_aggregate_edge_cases():
    with pytest.raises(ValueError):
        aggregate([])
    rep = aggregate([make_trace([1.0], aborted=True)])
    assert rep == {"aborted": 1, "completed": 0}
    solo = aggregate([make_trace([2.0, 1.0])])
    assert solo["band_lower"] == solo["median_regret"]


def test_write_csv_skips_nan_rows(tmp_path):
    tr_ok = make_trace([0.5, 0.25])
    tr_part = make_trace([0.75, np.nan], aborted=True)
    path = tmp_path / "regret.csv"
    write_csv(str(path), [tr_ok, tr_part])
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["run_id", "t", "r_t", "x_tilde", "batch", "wall_ms"]
    assert len(rows) == 1 + 3
    assert [r[0] for r in rows[1:]] == ["0", "0", "1"]
    assert [r[1] for r in rows[1:]] == ["1", "2", "1"]
    assert float(rows[2][2]) == 0.25
    assert len(rows[1][4].split()) == 4  # Q*D flattened batch


def test_write_summary_roundtrip(tmp_path):
    cfg = tiny_cfg()
    rep = {"completed": 1, "aborted": 0, "final_median_regret": 0.5}
    path = tmp_path / "summary.json"
    write_summary(str(path), cfg, rep)
    with open(path) as fh:
        got = json.load(fh)
    assert got["objective"] == "cosines"
    assert got["policy"] == "RANDOM"
    assert got["Q"] == 2 and got["T"] == 2
    assert got["report"] == rep


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("PPES_WORKERS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("PPES_WORKERS", "0")
    assert worker_count() == 1
    monkeypatch.delenv("PPES_WORKERS")
    assert worker_count() >= 1


def test_recommend_tracks_posterior_mean_argmax(small_data_1d):
    data, hyper = small_data_1d
    other = GpHyper(signal_var=0.9, lengthscales=np.array([0.22]),
                    noise_var=0.003)
    hypers = [hyper, other]
    x = recommend(data, unit_domain(1), hypers, np.random.default_rng(2))
    grid = np.linspace(0, 1, 20001)[:, None]
    mu = np.zeros(len(grid))
    for h in hypers:
        K = kernel(h, data.X, data.X) + h.noise_var * np.eye(data.n)
        mu += kernel(h, grid, data.X) @ np.linalg.solve(K, data.y) / len(hypers)
    assert abs(x[0] - grid[np.argmax(mu), 0]) < 1e-3


def test_figure_dataset_is_reproducible_and_prior_scaled():
    d1, h1 = make_figure_dataset(24)
    d2, _ = make_figure_dataset(24)
    assert np.array_equal(d1.X, d2.X) and np.array_equal(d1.y, d2.y)
    assert d1.n == 5 and h1.noise_var == pytest.approx(1e-4)
    assert np.max(np.abs(d1.y)) < 4.0  # unit prior scale


def test_cli_run_writes_outputs(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("PPES_WORKERS", "1")
    out = tmp_path / "exp"
    code = main([
        "run", "--objective", "cosines", "--policy", "RANDOM", "--q", "2",
        "--iters", "2", "--repeats", "2", "--seed", "1", "--m-samples", "3",
        "--out", str(out),
    ])
    assert code == 0
    assert (out / "regret.csv").exists()
    with open(out / "summary.json") as fh:
        summary = json.load(fh)
    assert summary["report"]["completed"] == 2
    assert "final median regret" in capsys.readouterr().out


def test_cli_run_fails_when_repeats_abort(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("PPES_WORKERS", "1")

    def boom(*args, **kwargs):
        raise RuntimeError("dead policy")

    monkeypatch.setattr(harness, "select_batch", boom)
    code = main([
        "run", "--objective", "cosines", "--policy", "RANDOM", "--q", "2",
        "--iters", "1", "--repeats", "1", "--seed", "1", "--m-samples", "3",
    ])
    assert code == 1
    assert "aborted" in capsys.readouterr().err


def test_cli_oracle_smoke(tmp_path, capsys):
    out = tmp_path / "oracle.csv"
    code = main([
        "oracle", "--seed", "1", "--grid", "20", "--paths", "10000",
        "--out", str(out),
    ])
    assert code == 0
    with open(out) as fh:
        lines = fh.read().strip().splitlines()
    assert lines[0] == "x,x_prime,value"
    assert len(lines) == 1 + 20 * 20
    assert "argmax pair" in capsys.readouterr().out


def test_cli_visualize_smoke(tmp_path, capsys):
    out = tmp_path / "ppes.csv"
    code = main([
        "visualize", "--seed", "1", "--grid", "8", "--m-samples", "3",
        "--out", str(out),
    ])
    assert code == 0
    with open(out) as fh:
        lines = fh.read().strip().splitlines()
    assert len(lines) == 1 + 8 * 8
    vals = np.array([float(l.split(",")[2]) for l in lines[1:]])
    assert np.all(np.isfinite(vals)) and np.all(vals > -1e-6)
    assert "argmax pair" in capsys.readouterr().out
