import csv
import io
import math

import numpy as np
import pytest
from scipy import stats

from bpbs.cli import _fmt
from bpbs.model import ModelConfig
from bpbs.simbench import (
    COVERAGE_POINTS,
    METRIC_COLUMNS,
    RESULT_COLUMNS,
    FitCurves,
    Scenario,
    Task,
    TestFunction,
    aggregate,
    compute_metrics,
    eval_test_function,
    generate_dataset,
    long_format,
    study_grid,
    run_benchmark,
    run_task,
)

TINY = ModelConfig(iterations=200, burnin=50)


def csv_bytes(rows, header):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(r[h]) for h in header])
    return buf.getvalue().encode()


class TestFunctions:
    def test_f1(self):
        x = np.linspace(0, 1, 11)
        assert eval_test_function("f1", 0.0) == 1.0
        np.testing.assert_array_equal(eval_test_function("f1", x, 1), eval_test_function("f1", x))

    def test_f2(self):
        assert eval_test_function("f2", 0.0) == 1.0
        assert eval_test_function("f2", 0.25) == pytest.approx(2.0, abs=1e-15)

    def test_f3_midpoint(self):
        assert eval_test_function("f3", 0.5) == pytest.approx(1 / 3, abs=1e-15)

    def test_f3_closed_form(self):
        x = np.linspace(0, 1, 101)
        logistic = 2 * np.exp(100 * (x - 0.5)) / (3 * (1 + np.exp(100 * (x - 0.5))))
        ref = (stats.norm(0.3, 0.1).pdf(x) - stats.norm(0.7, 0.1).pdf(x)) / 3 + logistic
        np.testing.assert_allclose(eval_test_function("f3", x), ref, atol=1e-12)

    @pytest.mark.parametrize("tag", ["f1", "f2", "f3"])
    @pytest.mark.parametrize("order", [1, 2])
    def test_derivatives_by_finite_differences(self, tag, order):
        x = np.linspace(0.02, 0.98, 97)
        h = 1e-5
        f = lambda t: eval_test_function(tag, t, order - 1)  # noqa: E731
        fd = (f(x + h) - f(x - h)) / (2 * h)
        scale = max(1.0, np.max(np.abs(fd)))
        np.testing.assert_allclose(eval_test_function(tag, x, order), fd, atol=1e-4 * scale)

    def test_finite_everywhere(self):
        x = np.linspace(0, 1, 10001)
        for tag in ("f1", "f2", "f3"):
            for order in (0, 1, 2):
                assert np.all(np.isfinite(eval_test_function(tag, x, order)))

    def test_unknown(self):
        with pytest.raises(ValueError):
            eval_test_function("f9", 0.5)
        with pytest.raises(ValueError):
            eval_test_function("f1", 0.5, 3)

    def test_callable_wrapper(self):
        assert TestFunction("f2")(0.25) == pytest.approx(2.0)


class TestScenario:
    @pytest.mark.parametrize("kw", [dict(n=5), dict(sigma=0.0), dict(replications=0),
                                    dict(function="g1"), dict(methods=("nope",))])
    def test_invalid(self, kw):
        base = dict(function="f1", n=200, sigma=0.5)
        base.update(kw)
        with pytest.raises(ValueError):
            Scenario(**base)

    def test_study_grid(self):
        g = study_grid()
        assert len(g) == 18
        assert {(s.n, s.sigma) for s in g} == {(n, s) for n in (200, 500, 1000) for s in (0.1, 0.5)}
        assert all(s.replications == 20 and len(s.methods) == 9 for s in g)

    def test_dataset_determinism(self):
        sc = Scenario("f2", 200, 0.5)
        a = generate_dataset(sc, 3)
        b = generate_dataset(sc, 3)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])
        assert not np.array_equal(a[1], generate_dataset(sc, 4)[1])

    def test_dataset_shape(self):
        x, y, f = generate_dataset(Scenario("f3", 500, 0.1), 0)
        assert np.all((x > 0) & (x < 1))
        assert np.all(np.diff(x) >= 0)
        assert len(y) == 500

    def test_noise_variance(self):
        x, y, f = generate_dataset(Scenario("f1", 100000, 0.5), 0)
        assert np.var(y - f(x), ddof=1) == pytest.approx(0.25, rel=0.02)


def _fit(grid, mean, d1=None, d2=None, lower=None, upper=None):
    k = len(COVERAGE_POINTS)
    return FitCurves(grid, mean, mean if d1 is None else d1, mean if d2 is None else d2,
                     COVERAGE_POINTS, np.full(k, -1.0) if lower is None else lower,
                     np.full(k, 1.0) if upper is None else upper)


class TestMetrics:
    grid = np.linspace(0, 1, 1001)
    truth = TestFunction("f2")

    def test_exact_fit(self):
        t = self.truth
        g = self.grid
        fit = FitCurves(g, t(g), t(g, 1), t(g, 2), COVERAGE_POINTS,
                        t(COVERAGE_POINTS) - 0.1, t(COVERAGE_POINTS) + 0.1)
        m = compute_metrics(fit, t)
        assert m["mse_f"] == m["mse_f1"] == m["mse_f2"] == 0.0
        assert all(m[f"cov_{x:.2f}"] == 1.0 for x in COVERAGE_POINTS)

    def test_constant_offset(self):
        t = self.truth
        g = self.grid
        fit = FitCurves(g, t(g) + 0.1, t(g, 1), t(g, 2), COVERAGE_POINTS,
                        np.zeros(10), np.zeros(10))
        assert compute_metrics(fit, t)["mse_f"] == pytest.approx(0.01, abs=1e-15)

    def test_wide_band(self):
        g = self.grid
        fit = _fit(g, np.zeros(len(g)), lower=np.full(10, -1e300), upper=np.full(10, 1e300))
        m = compute_metrics(fit, self.truth)
        assert all(m[f"cov_{x:.2f}"] == 1.0 for x in COVERAGE_POINTS)

    def test_derivative_truncation(self):
        g = self.grid
        t = self.truth
        d1 = t(g, 1).copy()
        d1[[0, 5, -6, -1]] += 100.0  # outside (0.01, 0.99): ignored
        fit = FitCurves(g, t(g), d1, t(g, 2), COVERAGE_POINTS, np.zeros(10), np.zeros(10))
        assert compute_metrics(fit, t)["mse_f1"] == 0.0

    def test_length_mismatch(self):
        g = self.grid
        with pytest.raises(ValueError):
            compute_metrics(_fit(g, np.zeros(10)), self.truth)
        with pytest.raises(ValueError):
            compute_metrics(_fit(g, np.zeros(len(g)), lower=np.zeros(3)), self.truth)


class TestRunner:
    def test_cardinality_and_ranges(self):
        sc = [Scenario("f1", 60, 0.5, 3, ("proposed", "ps30")), Scenario("f2", 60, 0.1, 3, ("proposed", "ps30"))]
        res = run_benchmark(sc, parallelism=1, cfg=TINY, grid_size=101)
        assert len(res.rows) == 12
        assert not res.failures
        for r in res.rows:
            assert r["mse_f"] >= 0 and r["mse_f1"] >= 0 and r["mse_f2"] >= 0
            assert all(0.0 <= r[f"cov_{x:.2f}"] <= 1.0 for x in COVERAGE_POINTS)
        assert len(res.aggregate) == 4
        assert all(a["n_ok"] == 3 for a in res.aggregate)

    def test_parallel_matches_serial(self):
        sc = [Scenario("f2", 60, 0.5, 2, ("proposed", "bps30", "ps30"))]
        a = run_benchmark(sc, parallelism=1, cfg=TINY, grid_size=101)
        b = run_benchmark(sc, parallelism=4, cfg=TINY, grid_size=101)
        assert csv_bytes(a.rows, RESULT_COLUMNS) == csv_bytes(b.rows, RESULT_COLUMNS)
        assert csv_bytes(a.aggregate, list(a.aggregate[0])) == csv_bytes(b.aggregate, list(b.aggregate[0]))

    def test_seed_isolation(self):
        sc = Scenario("f3", 60, 0.5, 3, ("proposed", "bbs-zs"))
        tasks = [Task(sc, m, r, TINY, 101) for m in sc.methods for r in range(3)]
        forward = {(t.method, t.replication): run_task(t)[0] for t in tasks}
        backward = {(t.method, t.replication): run_task(t)[0] for t in reversed(tasks)}
        for k in forward:
            for c in METRIC_COLUMNS:
                a, b = forward[k][c], backward[k][c]
                assert a == b or (math.isnan(a) and math.isnan(b))

    def test_single_replication_aggregate(self):
        sc = Scenario("f1", 60, 0.5, 1, ("proposed",))
        res = run_benchmark([sc], parallelism=1, cfg=TINY, grid_size=101)
        row, agg = res.rows[0], res.aggregate[0]
        for c in ("mse_f", "mse_f1", "mse_f2"):
            assert agg[f"mean_{c}"] == row[c]
            assert agg[f"mean_log_{c}"] == math.log(row[c])
        for x in COVERAGE_POINTS:
            assert agg[f"cov_{x:.2f}"] == row[f"cov_{x:.2f}"]
        assert agg["mean_J"] == agg["median_J"] == row["mean_J"]

    def test_failures_recorded_not_dropped(self):
        # J_max above n makes every fit fail for the Bayesian method
        sc = Scenario("f1", 20, 0.5, 2, ("proposed", "ps30"))
        bad = ModelConfig(iterations=50, burnin=10, J_max=30)
        res = run_benchmark([sc], parallelism=1, cfg=bad, grid_size=101)
        assert len(res.rows) == 4
        failed = [r for r in res.rows if r["status"] == "failed"]
        assert {r["method"] for r in failed} == {"proposed"}
        assert all("J_max" in r["error"] for r in failed)
        agg = {a["method"]: a for a in res.aggregate}
        assert agg["proposed"]["n_failed"] == 2 and agg["proposed"]["n_ok"] == 0

    def test_long_format(self):
        agg = aggregate([{"scenario": "s", "function": "f1", "n": 10, "sigma": 0.1, "method": "m",
                          "status": "ok", "mse_f": 1.0, "mse_f1": 1.0, "mse_f2": 1.0, "mean_J": 5.0,
                          **{f"cov_{x:.2f}": 1.0 for x in COVERAGE_POINTS}}])
        rows = long_format(agg)
        assert {r["metric"] for r in rows} >= {"mean_log_mse_f", "cov_0.05", "mean_J"}
        assert all(set(r) == {"scenario", "method", "metric", "value"} for r in rows)
