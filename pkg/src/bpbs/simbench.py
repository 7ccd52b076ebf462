"""Simulation study: test functions, replicated datasets, fit metrics, and a replication runner."""

from __future__ import annotations

import logging
import math
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from . import baselines
from .model import ModelConfig
from .posterior import curve_summary, mean_curve, model_size_summary

log = logging.getLogger(__name__)

COVERAGE_POINTS = np.round(np.arange(0.05, 1.0, 0.1), 2)
TRUNCATION = (0.01, 0.99)
FUNCTION_TAGS = ("f1", "f2", "f3")


# ---------------------------------------------------------------- test functions


def _phi(x, mu, s, order):
    d = x - mu
    p = np.exp(-0.5 * (d / s) ** 2) / (s * math.sqrt(2 * math.pi))
    if order == 0:
        return p
    if order == 1:
        return -d / s**2 * p
    return (d**2 / s**4 - 1 / s**2) * p


def _f3(x, order):
    bumps = (_phi(x, 0.3, 0.1, order) - _phi(x, 0.7, 0.1, order)) / 3
    L = expit(100 * (x - 0.5))
    if order == 0:
        step = L
    elif order == 1:
        step = 100 * L * (1 - L)
    else:
        step = 100**2 * L * (1 - L) * (1 - 2 * L)
    return bumps + 2 * step / 3


def eval_test_function(tag: str, x, order: int = 0):
    """Closed-form value (order 0) or derivative (orders 1, 2) of f1, f2, f3."""
    x = np.asarray(x, float)
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    if tag == "f1":
        return np.exp(x)
    if tag == "f2":
        w = 2 * np.pi
        return (1 + np.sin(w * x), w * np.cos(w * x), -(w**2) * np.sin(w * x))[order]
    if tag == "f3":
        return _f3(x, order)
    raise ValueError(f"unknown test function {tag!r}; expected one of {FUNCTION_TAGS}")


@dataclass(frozen=True)
class TestFunction:
    tag: str

    __test__ = False  # not a pytest class

    def __call__(self, x, order: int = 0):
        return eval_test_function(self.tag, x, order)


# ---------------------------------------------------------------- scenarios


@dataclass(frozen=True)
class Scenario:
    function: str
    n: int
    sigma: float
    replications: int = 20
    methods: tuple = ("proposed",)
    base_seed: int = 2024

    def __post_init__(self):
        if self.function not in FUNCTION_TAGS:
            raise ValueError(f"unknown test function {self.function!r}")
        if self.n < 10:
            raise ValueError("n must be at least 10")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.replications < 1:
            raise ValueError("need at least one replication")
        for m in self.methods:
            baselines.BaselineSpec.from_tag(m)

    @property
    def name(self) -> str:
        return f"{self.function}_n{self.n}_s{self.sigma:g}"

    def _entropy(self, *extra) -> list[int]:
        key = zlib.crc32(self.name.encode())
        return [int(self.base_seed), key, *extra]

    def seed_sequence(self, replication: int, method: str | None = None) -> np.random.SeedSequence:
        extra = [replication]
        if method is not None:
            extra.append(zlib.crc32(method.encode()))
        return np.random.SeedSequence(self._entropy(*extra))


def study_grid(replications: int = 20, methods=baselines.METHOD_TAGS, base_seed: int = 2024) -> list[Scenario]:
    """All 3 functions x {0.1, 0.5} x {200, 500, 1000}."""
    return [Scenario(f, n, s, replications, tuple(methods), base_seed)
            for f in FUNCTION_TAGS for s in (0.1, 0.5) for n in (200, 500, 1000)]


def generate_dataset(scenario: Scenario, replication_index: int):
    """Uniform design (returned sorted) with Gaussian noise; fully determined by the seeds."""
    rng = np.random.default_rng(scenario.seed_sequence(replication_index))
    x = np.sort(rng.random(scenario.n))
    f = TestFunction(scenario.function)
    y = f(x) + scenario.sigma * rng.standard_normal(scenario.n)
    return x, y, f


# ---------------------------------------------------------------- fitting and metrics


@dataclass
class FitCurves:
    """What the metrics need from any method, on a common evaluation grid."""

    grid: np.ndarray
    mean: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    band_x: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    mean_J: float = float("nan")
    acceptance: float = float("nan")


def fit_method(tag: str, x, y, grid, band_x=COVERAGE_POINTS, seed=0,
               cfg: ModelConfig | None = None, level: float = 0.95) -> FitCurves:
    """Fit method `tag` and evaluate its mean curves and band."""
    spec = baselines.BaselineSpec.from_tag(tag)
    cfg = ModelConfig() if cfg is None else cfg
    if spec.method == "PS":
        fit = baselines.fit_ps_gcv(y, x, knots=spec.knots_or_Jmax, degree=cfg.degree)
        band = fit.curve(band_x, level)
        return FitCurves(grid, fit.mean(grid), fit.mean(grid, 1), fit.mean(grid, 2),
                         band_x, band.lower, band.upper)
    if spec.method == "BPS":
        draws = baselines.fit_bps(y, x, knots=spec.knots_or_Jmax, degree=cfg.degree,
                                  iterations=cfg.iterations, burnin=cfg.burnin, thin=cfg.thin, seed=seed)
    elif spec.method == "BTP":
        draws = baselines.fit_btp(y, x, knots=spec.knots_or_Jmax, cfg=cfg, seed=seed)
    elif spec.method == "BBS_ZS":
        draws = baselines.fit_bbs_zs(y, x, cfg=cfg, seed=seed)
    elif spec.method == "BPSWBS":
        draws = baselines.fit_bpswbs(y, x, cfg=cfg, eta=spec.eta, seed=seed)
    else:
        draws = baselines.fit_proposed(y, x, cfg=cfg, seed=seed)
    band = curve_summary(draws, band_x, level)
    mean_J = model_size_summary(draws)[0] if spec.method in ("BBS_ZS", "BPSWBS", "PROPOSED") else float("nan")
    return FitCurves(grid, mean_curve(draws, grid), mean_curve(draws, grid, 1), mean_curve(draws, grid, 2),
                     band_x, band.lower, band.upper, mean_J, draws.acceptance_rate)


def compute_metrics(fit: FitCurves, truth, truncation=TRUNCATION) -> dict:
    """MSEs of f, f', f'' on the grid (derivatives on the open truncated domain) and coverage indicators."""
    g = np.asarray(fit.grid)
    for arr in (fit.mean, fit.d1, fit.d2):
        if len(arr) != len(g):
            raise ValueError("curve length does not match the evaluation grid")
    if not (len(fit.lower) == len(fit.upper) == len(fit.band_x)):
        raise ValueError("band length does not match the coverage points")
    inner = (g > truncation[0]) & (g < truncation[1])
    rec = {
        "mse_f": float(np.mean((fit.mean - truth(g)) ** 2)),
        "mse_f1": float(np.mean((fit.d1[inner] - truth(g[inner], 1)) ** 2)),
        "mse_f2": float(np.mean((fit.d2[inner] - truth(g[inner], 2)) ** 2)),
    }
    f0 = truth(fit.band_x)
    cover = (fit.lower <= f0) & (f0 <= fit.upper)
    for xb, c in zip(fit.band_x, cover):
        rec[f"cov_{xb:.2f}"] = float(c)
    rec["mean_J"] = fit.mean_J
    return rec


# ---------------------------------------------------------------- runner

METRIC_COLUMNS = ["mse_f", "mse_f1", "mse_f2"] + [f"cov_{x:.2f}" for x in COVERAGE_POINTS] + ["mean_J"]
RESULT_COLUMNS = ["scenario", "function", "n", "sigma", "method", "replication", "status", "error",
                  *METRIC_COLUMNS, "acceptance"]


@dataclass(frozen=True)
class Task:
    scenario: Scenario
    method: str
    replication: int
    cfg: ModelConfig
    grid_size: int = 1001


def run_task(task: Task) -> tuple[dict, float]:
    """One (scenario, method, replication) fit; returns the result row and wall time."""
    sc = task.scenario
    row = {"scenario": sc.name, "function": sc.function, "n": sc.n, "sigma": sc.sigma,
           "method": task.method, "replication": task.replication}
    t0 = time.perf_counter()
    try:
        x, y, truth = generate_dataset(sc, task.replication)
        seed = int(sc.seed_sequence(task.replication, task.method).generate_state(1)[0])
        grid = np.linspace(0.0, 1.0, task.grid_size)
        fit = fit_method(task.method, x, y, grid, seed=seed, cfg=task.cfg)
        row.update(compute_metrics(fit, truth))
        row.update(status="ok", error="", acceptance=fit.acceptance)
    except Exception as exc:  # recorded, flagged, excluded from aggregates
        log.warning("replication failed: %s %s rep %d: %s", sc.name, task.method, task.replication, exc)
        row.update({c: float("nan") for c in METRIC_COLUMNS})
        row.update(status="failed", error=f"{type(exc).__name__}: {exc}", acceptance=float("nan"))
    return row, time.perf_counter() - t0


@dataclass
class BenchmarkResult:
    rows: list
    timings: list
    aggregate: list = field(default_factory=list)

    @property
    def failures(self) -> list:
        return [r for r in self.rows if r["status"] != "ok"]


def aggregate(rows: list) -> list:
    """Per (scenario, method): mean log-MSEs, mean coverage per point, mean posterior J."""
    out = []
    keys = []
    for r in rows:
        k = (r["scenario"], r["method"])
        if k not in keys:
            keys.append(k)
    for sc, m in keys:
        group = [r for r in rows if r["scenario"] == sc and r["method"] == m]
        ok = [r for r in group if r["status"] == "ok"]
        rec = {"scenario": sc, "function": group[0]["function"], "n": group[0]["n"],
               "sigma": group[0]["sigma"], "method": m, "n_ok": len(ok),
               "n_failed": len(group) - len(ok)}
        for c in ("mse_f", "mse_f1", "mse_f2"):
            vals = np.array([r[c] for r in ok])
            rec[f"mean_log_{c}"] = float(np.mean(np.log(vals))) if len(vals) else float("nan")
            rec[f"mean_{c}"] = float(np.mean(vals)) if len(vals) else float("nan")
        for x in COVERAGE_POINTS:
            c = f"cov_{x:.2f}"
            rec[c] = float(np.mean([r[c] for r in ok])) if ok else float("nan")
        js = np.array([r["mean_J"] for r in ok], float)
        rec["mean_J"] = float(np.mean(js)) if len(js) and np.all(np.isfinite(js)) else float("nan")
        rec["median_J"] = float(np.median(js)) if len(js) and np.all(np.isfinite(js)) else float("nan")
        out.append(rec)
    return out


def long_format(agg: list) -> list:
    """Plot-ready rows ``(scenario, method, metric, value)``."""
    skip = {"scenario", "function", "n", "sigma", "method"}
    return [{"scenario": r["scenario"], "method": r["method"], "metric": k, "value": v}
            for r in agg for k, v in r.items() if k not in skip]


def default_parallelism() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def run_benchmark(scenarios, parallelism: int | None = None, cfg: ModelConfig | None = None,
                  grid_size: int = 1001) -> BenchmarkResult:
    """Run every (scenario, method, replication) and aggregate.

    Results are ordered by task index, never by completion order, and each
    task seeds itself from (scenario, replication, method).
    """
    cfg = ModelConfig() if cfg is None else cfg
    tasks = [Task(sc, m, r, cfg, grid_size)
             for sc in scenarios for m in sc.methods for r in range(sc.replications)]
    workers = default_parallelism() if parallelism is None else max(1, int(parallelism))
    if workers == 1 or len(tasks) == 1:
        results = [run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(run_task, tasks))
    rows = [r for r, _ in results]
    timings = [{"scenario": r["scenario"], "method": r["method"], "replication": r["replication"],
                "seconds": t} for r, t in results]
    return BenchmarkResult(rows=rows, timings=timings, aggregate=aggregate(rows))
