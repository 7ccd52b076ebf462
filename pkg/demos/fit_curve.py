"""Fit the spline model to noisy data from a two-bump curve and print a short report.

Run with ``python demos/fit_curve.py``. Takes about half a minute.
"""

import numpy as np

from bpbs import ModelConfig, curve_summary, derivative_summary, model_size_summary, run_chain
from bpbs.simbench import TestFunction

rng = np.random.default_rng(1)
truth = TestFunction("f2")
x = np.sort(rng.random(200))
y = truth(x) + 0.5 * rng.standard_normal(200)

cfg = ModelConfig(iterations=6000, burnin=1000)
draws = run_chain(y, x, cfg, rng_seed=7)

grid = np.linspace(0, 1, 11)
band = curve_summary(draws, grid)
slope = derivative_summary(draws, grid, order=1)
mean_J, hist = model_size_summary(draws)

print(f"J-move acceptance rate: {draws.acceptance_rate:.2f}")
print(f"posterior mean J: {mean_J:.2f}")
print("most visited J:", ", ".join(f"{j} ({p:.2f})" for j, p in sorted(hist.items(), key=lambda kv: -kv[1])[:4]))
print()
print("   x     truth    mean   [95% band]          slope  truth slope")
for k, g in enumerate(grid):
    print(f"{g:4.1f}  {truth(g):7.3f}  {band.mean[k]:7.3f}  [{band.lower[k]:6.3f}, {band.upper[k]:6.3f}]"
          f"  {slope.mean[k]:8.2f}  {truth(g, 1):8.2f}")

print()
print(f"posterior median lambda {np.median(draws.lam):.3g}, tau {np.median(draws.tau):.3f}, "
      f"sigma {np.sqrt(np.median(draws.sigma2)):.3f} (true 0.5)")
