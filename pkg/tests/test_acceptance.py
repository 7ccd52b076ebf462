"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Benchmark-backed criteria (6-8) share one session-scoped run at 20
replications with the default MCMC length.
"""

import time

import numpy as np
import pytest
from scipy import stats

from bpbs.cli import main
from bpbs.model import ModelConfig, log_marginal_likelihood, log_prior_J
from bpbs.sampler import ChainState, GibbsSampler
from bpbs.simbench import COVERAGE_POINTS, Scenario, default_parallelism, run_benchmark
from bpbs.splines import eval_basis, make_knots, penalty_set, transform_map

from conftest import record_criterion
from oracles import centered_design, fused_Q, gaussian_logpdf, ks_statistic, nig_log_marginal, quadrature_cdf


def report(k, ok, detail):
    record_criterion(f"criterion {k}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, detail


# ---------------------------------------------------------------- 1


def test_criterion_1_marginal_likelihood_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    n = 12
    x = np.sort(rng.random(n))
    y = np.sin(2 * np.pi * x) + 0.3 * rng.standard_normal(n)
    kappa = 10.0  # finite so the dense oracle is well conditioned
    cfg = ModelConfig(kappa=kappa, a_sigma=0.01, b_sigma=0.01)
    diffs = []
    for J in (4, 5, 6):
        sb = eval_basis(make_knots(J), x)
        ours = log_marginal_likelihood(y, sb, penalty_set(J), 1.0, 0.5, cfg)
        Bt = centered_design(sb.B)
        ref = nig_log_marginal(y, Bt, fused_Q(Bt, J, 0.5), 1.0, kappa, 0.01, 0.01)
        diffs.append(ours - ref)
    diffs = np.array(diffs)
    aligned = np.max(np.abs(diffs - diffs.mean()))
    elapsed = time.perf_counter() - t0
    report(1, aligned < 1e-8 and elapsed < 1.0,
           f"max aligned |diff| = {aligned:.2e} (raw {np.max(np.abs(diffs)):.2e}), {elapsed:.3f}s")


# ---------------------------------------------------------------- 2


def test_criterion_2_exact_posterior_J_move():
    t0 = time.perf_counter()
    rng = np.random.default_rng(15)
    x = np.sort(rng.random(15))
    y = np.exp(x) + 0.3 * rng.standard_normal(15)
    s = GibbsSampler(y, x, ModelConfig(J_max=8))
    lam, tau = 1.0, 0.5
    Js = np.arange(4, 9)
    lp = np.array([log_prior_J(J, s.cfg)
                   + log_marginal_likelihood(y, eval_basis(make_knots(J), x), penalty_set(J), lam, tau, s.cfg)
                   for J in Js])
    p = np.exp(lp - lp.max())
    p /= p.sum()
    st = ChainState(J=4, sigma2=0.1, theta1=0.0, theta=np.zeros(3), lam=lam, tau=tau)
    counts = np.zeros(len(Js))
    mc = np.random.default_rng(1)
    for _ in range(50000):
        st = s.step_J(st, mc)
        counts[st.J - 4] += 1
    tv = 0.5 * np.abs(counts / counts.sum() - p).sum()
    elapsed = time.perf_counter() - t0
    report(2, tv < 0.05 and elapsed < 30, f"TV = {tv:.4f}, {elapsed:.1f}s")


# ---------------------------------------------------------------- 3


def _kernel_sampler():
    rng = np.random.default_rng(33)
    x = np.sort(rng.random(120))
    y = 1 + np.sin(2 * np.pi * x) + 0.4 * rng.standard_normal(120)
    J = 12
    s = GibbsSampler(y, x, ModelConfig(), fixed_J=J)
    st = ChainState(J=J, sigma2=0.16, theta1=0.0, theta=np.zeros(J - 1), lam=1.2, tau=0.4)
    return s, s.step_coefficients(st, np.random.default_rng(0))


def test_criterion_3_kernel_stationarity():
    t0 = time.perf_counter()
    s, st = _kernel_sampler()
    rng = np.random.default_rng(3)

    # sigma^2: IG closed form
    shape, rate = s.sigma2_conditional(st)
    s2 = np.array([s.step_sigma2(st, rng).sigma2 for _ in range(100000)])
    ks_s2 = ks_statistic(s2, stats.invgamma(shape, scale=rate).cdf)

    # lambda: Exp x IG-kernel normalized by quadrature
    beta = s.lambda_quadratic(st)
    alpha = 0.5 * (st.J - 3)
    c = s.cfg.c_lambda
    cur = st
    lam = np.empty(200000)
    for i in range(len(lam)):
        cur = s.step_lambda_slice(cur, rng, beta)
        lam[i] = cur.lam
    cdf = quadrature_cdf(lambda t: -c * t - (alpha + 1) * np.log(t) - beta / t, 1e-8, 1e5)
    ks_lam = ks_statistic(lam, cdf)

    # tau: grid law from the dense Gaussian density
    cov = lambda t: st.lam * st.sigma2 * np.linalg.inv(s.cache(st.J).penalty(t))  # noqa: E731
    ref = np.array([gaussian_logpdf(st.theta, cov(t)) for t in s.tau_grid])
    p = np.exp(ref - ref.max())
    p /= p.sum()
    w = s.tau_log_weights(st)
    q = np.exp(w - w.max())
    q /= q.sum()
    tv_exact = 0.5 * np.abs(p - q).sum()
    idx = np.searchsorted(s.tau_grid, [s.step_tau(st, rng).tau for _ in range(200000)])
    emp = np.bincount(idx, minlength=len(p)) / 200000
    tv_mc = 0.5 * np.abs(emp - p).sum()  # informational: MC floor near 0.01 with 201 cells
    ks_tau = np.max(np.abs(np.cumsum(emp) - np.cumsum(p)))

    elapsed = time.perf_counter() - t0
    ok = ks_s2 < 0.01 and ks_lam < 0.01 and tv_exact < 0.01 and ks_tau < 0.01 and elapsed < 120
    report(3, ok, f"KS sigma2 = {ks_s2:.4f}, KS lambda = {ks_lam:.4f}, "
                  f"tau TV exact = {tv_exact:.1e}, KS tau sampled = {ks_tau:.4f} "
                  f"(sampled TV {tv_mc:.4f}), {elapsed:.1f}s")


# ---------------------------------------------------------------- 4


def test_criterion_4_transform_identity():
    rng = np.random.default_rng(4)
    worst_q = worst_f = 0.0
    for _ in range(100):
        J = int(rng.integers(4, 31))
        n = int(rng.integers(max(J, 10), 201))
        sb = eval_basis(make_knots(J), rng.random(n))
        ps = penalty_set(J)
        theta = rng.standard_normal(J) * rng.uniform(0.1, 10)
        ts = transform_map(sb) @ theta
        q1 = theta @ ps.P @ theta
        q2 = ts[1:] @ ps.Pt @ ts[1:]
        worst_q = max(worst_q, abs(q1 - q2) / abs(q1))
        f1 = sb.B @ theta
        f2 = ts[0] + sb.Bt @ ts[1:]
        worst_f = max(worst_f, np.max(np.abs(f1 - f2)) / np.max(np.abs(f1)))
    report(4, worst_q < 1e-10 and worst_f < 1e-10,
           f"max rel err quadratic form = {worst_q:.1e}, function = {worst_f:.1e}")


# ---------------------------------------------------------------- 5


def test_criterion_5_grid_density_consistency():
    rng = np.random.default_rng(5)
    worst = 0.0
    for k in range(50):
        J = int(rng.integers(4, 11))
        n = int(rng.integers(30, 200))
        x = np.sort(rng.random(n))
        s = GibbsSampler(rng.standard_normal(n), x, ModelConfig(), fixed_J=J)
        st = ChainState(J=J, sigma2=float(np.exp(rng.uniform(-3, 1))), theta1=0.0,
                        theta=rng.standard_normal(J - 1) * rng.uniform(0.1, 3),
                        lam=float(np.exp(rng.uniform(-3, 3))), tau=0.5)
        w = s.tau_log_weights(st)
        Pt = s.cache(J).Pt
        G = s.cache(J).gram
        ref = np.array([gaussian_logpdf(st.theta, st.lam * st.sigma2
                                        * np.linalg.inv((1 - t) * Pt + t / n * G)) for t in s.tau_grid])
        d = w - ref
        worst = max(worst, d.max() - d.min())
    report(5, worst < 1e-8, f"max over states of (max - min) = {worst:.1e}")


# ---------------------------------------------------------------- 6-8


BENCH_SCENARIOS = [
    Scenario("f1", 200, 0.5, 20, ("proposed", "bps30")),
    Scenario("f3", 200, 0.5, 20, ("proposed", "bbs-zs")),
    Scenario("f2", 200, 0.1, 20, ("proposed", "bps60")),
    Scenario("f2", 500, 0.5, 20, ("proposed",)),
    Scenario("f2", 200, 0.5, 20, ("proposed", "bpswbs")),
]


@pytest.fixture(scope="module")
def bench():
    t0 = time.perf_counter()
    res = run_benchmark(BENCH_SCENARIOS, parallelism=default_parallelism(), cfg=ModelConfig())
    res.elapsed = time.perf_counter() - t0
    res.by = {(a["scenario"], a["method"]): a for a in res.aggregate}
    return res


def test_criterion_6_method_orderings(bench):
    by = bench.by
    a = (by[("f1_n200_s0.5", "proposed")]["mean_log_mse_f"], by[("f1_n200_s0.5", "bps30")]["mean_log_mse_f"])
    b = (by[("f3_n200_s0.5", "proposed")]["mean_log_mse_f"], by[("f3_n200_s0.5", "bbs-zs")]["mean_log_mse_f"])
    c = (by[("f2_n200_s0.1", "proposed")]["mean_mse_f2"], by[("f2_n200_s0.1", "bps60")]["mean_mse_f2"])
    c_log = (by[("f2_n200_s0.1", "proposed")]["mean_log_mse_f2"], by[("f2_n200_s0.1", "bps60")]["mean_log_mse_f2"])
    failed = sum(a_["n_failed"] for a_ in bench.aggregate)
    ok = a[0] < a[1] and b[0] < b[1] and c[0] < c[1] and failed == 0
    report(6, ok, f"(a) {a[0]:.3f} < {a[1]:.3f}; (b) {b[0]:.3f} < {b[1]:.3f}; "
                  f"(c) mean d2-MSE {c[0]:.2f} < {c[1]:.2f} (log {c_log[0]:.3f} vs {c_log[1]:.3f}); "
                  f"failed fits {failed}; benchmark {bench.elapsed:.0f}s on {default_parallelism()} worker(s)")


def test_criterion_7_coverage(bench):
    agg = bench.by[("f2_n500_s0.5", "proposed")]
    cov = np.array([agg[f"cov_{x:.2f}"] for x in COVERAGE_POINTS])
    report(7, bool(np.all((cov >= 0.85) & (cov <= 1.0))),
           "coverage " + " ".join(f"{v:.2f}" for v in cov))


def test_criterion_8_model_size(bench):
    prop = bench.by[("f2_n200_s0.5", "proposed")]["median_J"]
    ridge = bench.by[("f2_n200_s0.5", "bpswbs")]["median_J"]
    report(8, prop <= ridge + 1, f"median mean-J proposed {prop:.2f} <= bpswbs {ridge:.2f} + 1")


# ---------------------------------------------------------------- 9


def test_criterion_9_determinism(tmp_path):
    rng = np.random.default_rng(9)
    x = rng.uniform(0, 10, 80)
    data = tmp_path / "d.csv"
    data.write_text("x,y\n" + "".join(f"{float(a)!r},{float(np.sin(a) + 0.2 * e)!r}\n"
                                      for a, e in zip(x, rng.standard_normal(80))))
    fits = []
    for k in range(2):
        out = tmp_path / f"fit{k}"
        assert main(["fit", str(data), "--x", "x", "--y", "y", "--seed", "7", "--iterations", "1500",
                     "--burnin", "500", "--save-draws", "-o", str(out)]) == 0
        fits.append({f: (out / f).read_bytes() for f in
                     ("curve.csv", "derivatives.csv", "model_size.csv", "draws.txt")})
    sims = []
    for par in (1, 4, 2):
        out = tmp_path / f"sim{par}"
        assert main(["simulate", "--function", "f2,f3", "--n", "100", "--sigma", "0.5", "--reps", "3",
                     "--methods", "proposed,bps30,bbs-zs,ps30", "--iterations", "600", "--burnin", "200",
                     "--parallelism", str(par), "--grid-size", "201", "-o", str(out)]) == 0
        sims.append({f: (out / f).read_bytes() for f in ("results.csv", "aggregate.csv", "long.csv")})
    ok = fits[0] == fits[1] and sims[0] == sims[1] == sims[2]
    report(9, ok, f"fit outputs identical: {fits[0] == fits[1]}; "
                  f"benchmark CSVs identical across parallelism 1/4/2: {sims[0] == sims[1] == sims[2]}")
