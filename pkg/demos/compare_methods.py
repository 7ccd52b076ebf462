"""A tiny benchmark: the spline model against GCV P-splines and Bayesian P-splines.

Three replications on the steep-step test function with short chains, so the
numbers are noisy; the full comparison lives in ``bpbs simulate --preset desk``.
"""

import numpy as np

from bpbs import ModelConfig
from bpbs.simbench import COVERAGE_POINTS, Scenario, run_benchmark

scenario = Scenario("f3", 200, 0.5, replications=3, methods=("proposed", "ps30", "bps30", "bbs-zs"))
res = run_benchmark([scenario], parallelism=1, cfg=ModelConfig(iterations=3000, burnin=1000))

print(f"{'method':10s} {'log MSE f':>10s} {'log MSE f1':>11s} {'mean cov':>9s} {'mean J':>7s}")
for a in res.aggregate:
    print(f"{a['method']:10s} {a['mean_log_mse_f']:10.3f} {a['mean_log_mse_f1']:11.3f} "
          f"{np.mean([a[f'cov_{x:.2f}'] for x in COVERAGE_POINTS]):9.2f} {a['mean_J']:7.1f}")
