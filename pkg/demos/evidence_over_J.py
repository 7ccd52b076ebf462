"""How the marginal likelihood trades fit against dimension.

For one small data set, print log p(y | J, lambda, tau) and the posterior
over J it implies under the geometric prior, for a few values of the mixing
weight tau. Small tau leans on the roughness penalty, large tau on the
g-prior-style shrinkage.
"""

import numpy as np
from scipy.special import logsumexp

from bpbs import ModelConfig, eval_basis, log_marginal_likelihood, make_knots, penalty_set
from bpbs.model import log_prior_J

rng = np.random.default_rng(3)
x = np.sort(rng.random(60))
y = np.sin(3 * np.pi * x) + 0.3 * rng.standard_normal(60)
cfg = ModelConfig(J_max=20)
Js = np.arange(cfg.J_min, cfg.J_max + 1)
bases = {J: (eval_basis(make_knots(J), x), penalty_set(J)) for J in Js}

for tau in (0.1, 0.5, 0.9):
    lml = np.array([log_marginal_likelihood(y, *bases[J], 1.0, tau, cfg) for J in Js])
    lp = lml + np.array([log_prior_J(J, cfg) for J in Js])
    post = np.exp(lp - logsumexp(lp))
    top = Js[np.argsort(post)[::-1][:3]]
    print(f"tau={tau}: argmax log ML at J={Js[lml.argmax()]}, "
          f"posterior mode J={top[0]}, next {top[1]}, {top[2]}; "
          f"P(J <= 8) = {post[Js <= 8].sum():.3f}")
