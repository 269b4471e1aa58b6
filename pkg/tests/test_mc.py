"""Monte Carlo harness: mean functions, error cases, summaries, outputs."""

import csv
import json
import math

import numpy as np
import pytest

from spatial_lp import mc, randfield


def test_paper_mean_values():
    assert mc.paper_mean(np.zeros((1, 2)))[0] == pytest.approx(15 * math.cos(1.0))
    assert mc.paper_mean(np.array([[0.2, -0.2]]))[0] == pytest.approx(
        17.0 * math.cos(1.0)
    )


def test_make_mean_function():
    f = mc.make_mean_function("paper_mean")
    assert f is mc.paper_mean

    g = mc.make_mean_function("x1 + 2*x2")
    np.testing.assert_allclose(g(np.array([[0.1, 0.2], [0.3, -0.1]])), [0.5, 0.1])

    const = mc.make_mean_function("1.5")
    np.testing.assert_allclose(const(np.zeros((3, 2))), [1.5, 1.5, 1.5])

    h = mc.make_mean_function(lambda z: z[:, 0])
    np.testing.assert_allclose(h(np.array([[0.4, 0.0]])), [0.4])


def test_error_case_field_model():
    assert mc.ErrorCase("iid", sigma2=1.0).field_model() is None
    model = mc.ErrorCase("car1", lam=0.5, tau2=0.0025).field_model()
    assert isinstance(model, randfield.FieldModel)
    assert model.kernels == ((1.0, 0.5),)
    assert model.tau2 == 0.0025
    assert model.n_knots == 800
    with pytest.raises(ValueError):
        mc.ErrorCase("white-noise").field_model()


def test_experiment_spec_validation():
    with pytest.raises(ValueError):
        mc.ExperimentSpec(reps=0, n=100, A=(10.0, 10.0))
    with pytest.raises(ValueError):
        mc.ExperimentSpec(reps=10, n=100, A=(10.0, 10.0), fit_h=(0.2, -0.2))


def test_summarize_outlier_rule():
    values = [-12.0, 0.0, 1.0]
    mean, var, coverage, retained = mc.summarize(values, 0.05, -10.0)
    # -12 is dropped from the moments but still counts against coverage
    assert retained == 2
    assert mean == pytest.approx(0.5)
    assert var == pytest.approx(0.5)
    assert coverage == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        mc.summarize([-20.0, -30.0], 0.05, -10.0)


def test_summarize_explicit_coverage():
    _, _, coverage, _ = mc.summarize(
        [0.0, 0.0, 0.0], 0.05, -10.0, covered=np.array([True, False, True])
    )
    assert coverage == pytest.approx(2 / 3)


def test_run_replication_deterministic():
    spec = mc.ExperimentSpec(reps=1, n=300, A=(10.0, 10.0), master_seed=5)
    t1, c1 = mc.run_replication(spec, 0)
    t2, c2 = mc.run_replication(spec, 0)
    assert t1 == t2 and c1 == c2
    t3, _ = mc.run_replication(spec, 1)
    assert t3 != t1


def test_run_experiment_reproducible_and_consistent():
    spec = mc.ExperimentSpec(reps=8, n=300, A=(10.0, 10.0), master_seed=5)
    s1 = mc.run_experiment(spec, threads=1)
    s2 = mc.run_experiment(spec, threads=1)
    assert s1.t_values == s2.t_values
    assert s1.covered == s2.covered
    assert s1.rep_ids == list(range(8))
    assert not s1.failures
    assert sum(s1.hist_counts) == len(s1.t_values)
    assert s1.coverage == pytest.approx(np.mean(s1.covered))
    # replication 0 matches the standalone entry point
    t0, _ = mc.run_replication(spec, 0)
    assert s1.t_values[0] == t0


def test_run_experiment_records_failures():
    spec = mc.ExperimentSpec(
        reps=10,
        n=100,
        A=(10.0, 10.0),
        master_seed=3,
        fit_h=(0.15, 0.15),
        pilot_h=(0.15, 0.15),
        variance_h=(0.15, 0.15),
    )
    s = mc.run_experiment(spec)
    assert 0 < len(s.failures) < spec.reps
    failed = {f["rep"] for f in s.failures}
    assert sorted(failed | set(s.rep_ids)) == list(range(spec.reps))
    assert len(s.rep_ids) == len(s.t_values) == len(s.covered)
    for f in s.failures:
        assert "error" in f and f["error"]


def test_car1_case_runs():
    spec = mc.ExperimentSpec(
        reps=2,
        n=300,
        A=(10.0, 10.0),
        master_seed=11,
        error=mc.ErrorCase("car1", sigma2=0.01, lam=1.0, tau2=0.01, n_knots=200),
    )
    s = mc.run_experiment(spec)
    assert len(s.t_values) == 2
    assert all(np.isfinite(s.t_values))


def test_write_outputs(tmp_path):
    spec = mc.ExperimentSpec(reps=5, n=300, A=(10.0, 10.0), master_seed=5)
    summary = mc.run_experiment(spec)
    mc.write_outputs(summary, tmp_path)

    payload = json.loads((tmp_path / "summary.json").read_text())
    assert payload["coverage"] == summary.coverage
    assert payload["retained"] == summary.retained
    assert payload["hist_edges"][0] == "-inf"
    assert payload["hist_edges"][-1] == "inf"
    assert payload["metadata"]["spec"]["n"] == 300

    with (tmp_path / "that.csv").open() as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 5
    assert float(rows[0]["t_hat"]) == summary.t_values[0]

    with (tmp_path / "hist.csv").open() as f:
        hist = list(csv.DictReader(f))
    assert len(hist) == len(summary.hist_counts)
    assert sum(int(r["count"]) for r in hist) == len(summary.t_values)
