"""Blocked Gibbs sampler for spline regression with basis-dimension selection.

One sweep updates, in order: the basis dimension J by a +/-1 Metropolis move
on the coefficient-marginalized posterior; sigma^2 and the coefficients
from their conjugate conditionals; the scale lambda; and the mixing weight
tau by grid sampling.  The same machinery runs the comparator priors (the
Zellner-Siow g-prior, the ridged P-spline prior, and the fixed-J twofold
penalty) by swapping the coefficient precision and the lambda update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy import linalg
from scipy.linalg import lapack
from scipy.special import gammaincc, gammainccinv

from .model import ModelConfig, log_ml_from_parts, log_prior_J
from .splines import SplineBasis, eval_basis, make_knots, penalty_set


class SamplerError(RuntimeError):
    pass


# ---------------------------------------------------------------- primitives


def exp_density(lam: float, rate: float) -> float:
    return rate * math.exp(-rate * lam)


def exp_density_inv(gamma: float, rate: float) -> float:
    """Inverse of the exponential density, ``-log(gamma / rate) / rate``."""
    return -math.log(gamma / rate) / rate


def sample_truncated_invgamma(shape: float, rate: float, upper: float, rng) -> float:
    """Draw from InverseGamma(shape, rate) restricted to (0, upper).

    With ``lam = rate / G`` and ``G ~ Gamma(shape, 1)``, the truncation is
    ``G > rate / upper``; the upper tail of G is inverted through the
    regularized incomplete gamma function, with a rejection sampler when the
    tail mass underflows.
    """
    if not shape > 0:
        raise FloatingPointError(f"inverse-gamma shape must be positive, got {shape}")
    if not rate > 0:
        raise FloatingPointError(f"degenerate inverse-gamma rate {rate}")
    if not upper > 0:
        raise FloatingPointError(f"truncation point must be positive, got {upper}")
    g0 = rate / upper
    tail = gammaincc(shape, g0)
    if tail > 1e-280:
        u = rng.random()
        g = float(gammainccinv(shape, (1.0 - u) * tail))
        if g >= g0 and np.isfinite(g) and g > 0:
            return rate / g
    g = _gamma_tail_rejection(shape, g0, rng)
    return rate / g


def _gamma_tail_rejection(shape: float, g0: float, rng) -> float:
    if shape > 1.0 and g0 <= shape - 1.0:
        # tail mass is not small here: plain rejection from the full gamma
        while True:
            g = rng.gamma(shape)
            if g > g0:
                return g
    # shifted exponential proposal on (g0, inf), envelope tight at g0
    r = 1.0 if shape <= 1.0 else 1.0 - (shape - 1.0) / g0
    for _ in range(100000):
        g = g0 + rng.exponential() / r
        log_acc = (shape - 1.0) * math.log(g / g0)
        if shape > 1.0:
            log_acc -= (shape - 1.0) * (g - g0) / g0
        if math.log(rng.random()) < log_acc:
            return g
    raise FloatingPointError("truncated gamma rejection sampler failed to accept")


def _chol(a: np.ndarray) -> np.ndarray:
    c, info = lapack.dpotrf(a, lower=1, clean=1, overwrite_a=0)
    if info != 0:
        raise linalg.LinAlgError(f"matrix not positive definite (dpotrf info={info})")
    return c


def _trsolve(L: np.ndarray, b: np.ndarray, trans: int = 0) -> np.ndarray:
    x, info = lapack.dtrtrs(L, b, lower=1, trans=trans)
    if info != 0:
        raise linalg.LinAlgError(f"triangular solve failed (info={info})")
    return x


# ---------------------------------------------------------------- state


@dataclass(frozen=True)
class ChainState:
    J: int
    sigma2: float
    theta1: float
    theta: np.ndarray
    lam: float
    tau: float


@dataclass(frozen=True)
class CoefficientPrior:
    """Which precision the centered coefficients get, and how lambda is updated.

    kind
        ``"fused"``: ``(1 - tau) Pt + tau/n Bt'Bt`` (tau sampled on a grid);
        ``"gprior"``: ``Bt'Bt / n``; ``"ridged"``: ``Pt + eta I``.
    lambda_prior
        ``"exp"`` (rate ``c_lambda`` from the config, slice update) or
        ``"ig"`` (``InverseGamma(lambda_a, lambda_b)``, conjugate update).
    """

    kind: str = "fused"
    lambda_prior: str = "exp"
    lambda_a: float = 0.5
    lambda_b: float = 0.5
    eta: float = 1e-3

    def __post_init__(self):
        if self.kind not in ("fused", "gprior", "ridged"):
            raise ValueError(f"unknown coefficient prior {self.kind!r}")
        if self.lambda_prior not in ("exp", "ig"):
            raise ValueError(f"unknown lambda prior {self.lambda_prior!r}")
        if self.lambda_prior == "ig" and not (self.lambda_a > 0 and self.lambda_b > 0):
            raise ValueError("inverse-gamma lambda prior needs positive parameters")
        if self.kind == "ridged" and not self.eta > 0:
            raise ValueError("eta must be positive")

    @property
    def has_tau(self) -> bool:
        return self.kind == "fused"


FUSED = CoefficientPrior()


class _JCache:
    """Data-dependent quantities for one basis dimension."""

    def __init__(self, J: int, x: np.ndarray, y: np.ndarray, cfg: ModelConfig, prior: CoefficientPrior):
        self.J = J
        self.basis = eval_basis(make_knots(J, cfg.degree), x)
        Bt = self.basis.Bt
        self.n = len(x)
        self.gram = np.ascontiguousarray(Bt.T @ Bt)
        self.b = Bt.T @ y
        self.Pt = penalty_set(J).Pt
        self.prior = prior
        ev = np.linalg.eigvalsh(self.gram)
        self.gram_pd = bool(ev[0] > 1e-10 * max(ev[-1], 1e-300))
        self.logdet_gram = float(np.sum(np.log(ev))) if self.gram_pd else -np.inf
        self.admissible = True
        self._rho = None
        self._mu = None
        self._logdet_M = None
        self._tau_det = None
        if prior.kind == "gprior":
            self.admissible = self.gram_pd
        elif prior.kind == "ridged":
            R = self.Pt + prior.eta * np.eye(J - 1)
            self.ridged = R
            self.logdet_ridged = 2.0 * float(np.sum(np.log(np.diag(_chol(R)))))

    # fused prior: log|(1 - tau) Pt + tau/n G| through generalized eigenvalues
    @property
    def rho(self) -> np.ndarray:
        """Eigenvalues of ``(Bt'Bt)^-1 Pt`` in decreasing order, clipped at 0."""
        if self._rho is None:
            if not self.gram_pd:
                raise linalg.LinAlgError(f"Bt'Bt is singular at J={self.J}")
            r = linalg.eigh(self.Pt, self.gram, eigvals_only=True)
            self._rho = np.clip(r[::-1], 0.0, None)
        return self._rho

    def _pencil(self):
        # P v = mu (P + G/n) v; used when G is singular.
        if self._mu is None:
            M = self.Pt + self.gram / self.n
            self._mu = np.clip(linalg.eigh(self.Pt, M, eigvals_only=True), 0.0, 1.0)
            self._logdet_M = float(np.linalg.slogdet(M)[1])
        return self._mu, self._logdet_M

    def fused_logdet(self, tau):
        """``log|(1 - tau) Pt + tau/n Bt'Bt|`` for scalar or array tau."""
        tau = np.asarray(tau, dtype=float)
        d = self.J - 1
        if self.gram_pd:
            ratio = self.n * (1.0 - tau) / tau
            s = np.log1p(np.multiply.outer(ratio, self.rho)).sum(axis=-1)
            return s + d * np.log(tau) + self.logdet_gram - d * math.log(self.n)
        mu, ldM = self._pencil()
        w = np.multiply.outer(1.0 - tau, mu) + np.multiply.outer(tau, 1.0 - mu)
        return np.log(w).sum(axis=-1) + ldM

    def tau_det(self, grid: np.ndarray) -> np.ndarray:
        if self._tau_det is None:
            self._tau_det = 0.5 * self.fused_logdet(grid)
        return self._tau_det

    def penalty(self, tau: float) -> np.ndarray:
        kind = self.prior.kind
        if kind == "fused":
            return (1.0 - tau) * self.Pt + (tau / self.n) * self.gram
        if kind == "gprior":
            return self.gram / self.n
        return self.ridged

    def logdet_penalty(self, tau: float) -> float:
        kind = self.prior.kind
        if kind == "fused":
            return float(self.fused_logdet(tau))
        if kind == "gprior":
            return self.logdet_gram - (self.J - 1) * math.log(self.n)
        return self.logdet_ridged


class _Factor(NamedTuple):
    L: np.ndarray  # lower Cholesky factor of Omega
    z: np.ndarray  # L^-1 Bt'y
    S: float
    log_ml: float


# ---------------------------------------------------------------- draws


@dataclass
class PosteriorDraws:
    """Post-burn-in snapshots of the chain, with what is needed to rebuild each basis."""

    x: np.ndarray
    degree: int
    J: np.ndarray
    sigma2: np.ndarray
    lam: np.ndarray
    tau: np.ndarray
    theta1: np.ndarray
    theta: list
    accepted: int = 0
    proposed: int = 0
    meta: dict = field(default_factory=dict)
    _bases: dict = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.J)

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else float("nan")

    def basis(self, J: int) -> SplineBasis:
        J = int(J)
        if J not in self._bases:
            self._bases[J] = eval_basis(make_knots(J, self.degree), self.x)
        return self._bases[J]

    def groups(self):
        """Yield ``(J, indices)`` for each distinct J, in increasing J."""
        for J in np.unique(self.J):
            yield int(J), np.flatnonzero(self.J == J)

    def theta_block(self, idx) -> np.ndarray:
        return np.stack([self.theta[i] for i in idx])

    def state(self, i: int) -> ChainState:
        return ChainState(int(self.J[i]), float(self.sigma2[i]), float(self.theta1[i]),
                          self.theta[i], float(self.lam[i]), float(self.tau[i]))


# ---------------------------------------------------------------- sampler


class GibbsSampler:
    """Sampler bound to one dataset.

    Parameters
    ----------
    y, x : array_like
        Responses and design points in [0, 1].
    cfg : ModelConfig
        Resolved against ``len(y)`` on construction.
    prior : CoefficientPrior
        Coefficient prior; the default is the fused prior.
    fixed_J : int, optional
        Disable the J move and keep this dimension.
    """

    def __init__(self, y, x, cfg: ModelConfig = ModelConfig(), prior: CoefficientPrior = FUSED,
                 fixed_J: int | None = None):
        y = np.asarray(y, dtype=float)
        x = np.asarray(x, dtype=float)
        if y.ndim != 1 or y.shape != x.shape:
            raise ValueError("x and y must be 1-d arrays of equal length")
        if np.any(~np.isfinite(y)):
            raise ValueError("y contains non-finite values")
        if np.any(~np.isfinite(x)) or x.min() < 0 or x.max() > 1:
            raise ValueError("design points must lie in [0, 1]")
        self.y = y
        self.x = x
        self.n = n = len(y)
        if fixed_J is not None:
            cfg = replace(cfg, J_min=fixed_J, J_max=fixed_J)
        if n < cfg.J_min + 2:
            raise ValueError(f"need at least J_min + 2 = {cfg.J_min + 2} observations, got {n}")
        self.cfg = cfg.resolve(n)
        self.prior = prior
        self.move_J = fixed_J is None and self.cfg.J_min < self.cfg.J_max
        self.yty = float(y @ y)
        self.ysum = float(y.sum())
        self.tau_grid = self.cfg.tau_grid()
        self._log_prior_J = {J: log_prior_J(J, self.cfg)
                             for J in range(self.cfg.J_min, self.cfg.J_max + 1)}
        self._caches: dict[int, _JCache] = {}
        self._factors: dict = {}
        self.accepted = 0
        self.proposed = 0

    # -- caches

    def cache(self, J: int) -> _JCache:
        c = self._caches.get(J)
        if c is None:
            c = _JCache(J, self.x, self.y, self.cfg, self.prior)
            self._caches[J] = c
        return c

    def factor(self, J: int, lam: float, tau: float) -> _Factor:
        key = (J, lam, tau)
        f = self._factors.get(key)
        if f is not None:
            return f
        if len(self._factors) > 8:
            self._factors.clear()
        c = self.cache(J)
        Q = c.penalty(tau)
        L = _chol(Q / lam + c.gram)
        z = _trsolve(L, c.b)
        ik2 = self.cfg.inv_kappa2
        S = self.yty - self.ysum * self.ysum / (self.n + ik2) - float(z @ z)
        logdet_prior = c.logdet_penalty(tau) - (J - 1) * math.log(lam)
        logdet_post = 2.0 * float(np.sum(np.log(np.diag(L))))
        lml = log_ml_from_parts(logdet_prior, logdet_post, S, self.n, self.cfg)
        f = _Factor(L, z, S, lml)
        self._factors[key] = f
        return f

    def log_ml(self, J: int, lam: float, tau: float) -> float:
        """Log marginal likelihood of J at (lam, tau); -inf for inadmissible J."""
        if J < self.cfg.J_min or J > self.cfg.J_max or not self.cache(J).admissible:
            return -np.inf
        try:
            return self.factor(J, lam, tau).log_ml
        except linalg.LinAlgError:
            return -np.inf

    def log_prior_J(self, J: int) -> float:
        return self._log_prior_J.get(J, -np.inf)

    # -- kernels

    def _proposal_logprob(self, J_from: int, J_to: int) -> float:
        lo, hi = self.cfg.J_min, self.cfg.J_max
        if J_from == lo or J_from == hi:
            return 0.0
        return math.log(0.5)

    def step_J(self, state: ChainState, rng) -> ChainState:
        """Metropolis +/-1 move on J at the current (lambda, tau)."""
        if not self.move_J:
            return state
        J = state.J
        lo, hi = self.cfg.J_min, self.cfg.J_max
        if J == lo:
            Jp = J + 1
        elif J == hi:
            Jp = J - 1
        else:
            Jp = J + 1 if rng.random() < 0.5 else J - 1
        self.proposed += 1
        lml_new = self.log_ml(Jp, state.lam, state.tau)
        if not np.isfinite(lml_new):
            return state
        log_alpha = (self.log_prior_J(Jp) + lml_new - self.log_prior_J(J)
                     - self.log_ml(J, state.lam, state.tau)
                     + self._proposal_logprob(Jp, J) - self._proposal_logprob(J, Jp))
        if log_alpha >= 0 or math.log(rng.random()) < log_alpha:
            self.accepted += 1
            return replace(state, J=Jp)
        return state

    def log_accept_ratio(self, J: int, Jp: int, lam: float, tau: float) -> float:
        """Log Hastings ratio for moving J -> Jp."""
        return (self.log_prior_J(Jp) + self.log_ml(Jp, lam, tau) - self.log_prior_J(J)
                - self.log_ml(J, lam, tau)
                + self._proposal_logprob(Jp, J) - self._proposal_logprob(J, Jp))

    def sigma2_conditional(self, state: ChainState) -> tuple[float, float]:
        """Shape and rate of the inverse-gamma conditional of sigma^2 (coefficients integrated out)."""
        f = self.factor(state.J, state.lam, state.tau)
        rate = self.cfg.b_sigma + 0.5 * f.S
        if not rate > 0:
            raise FloatingPointError(f"nonpositive sigma^2 rate {rate!r}")
        return self.cfg.a_sigma + 0.5 * self.n, rate

    def step_sigma2(self, state: ChainState, rng) -> ChainState:
        shape, rate = self.sigma2_conditional(state)
        return replace(state, sigma2=rate / rng.gamma(shape))

    def coefficient_conditional(self, state: ChainState):
        """Mean and Cholesky factor of Omega for the centered coefficients; mean and var of theta1."""
        f = self.factor(state.J, state.lam, state.tau)
        mean = _trsolve(f.L, f.z, trans=1)
        denom = self.n + self.cfg.inv_kappa2
        return mean, f.L, self.ysum / denom, state.sigma2 / denom

    def step_coefficients(self, state: ChainState, rng) -> ChainState:
        f = self.factor(state.J, state.lam, state.tau)
        sd = math.sqrt(state.sigma2)
        eps = rng.standard_normal(state.J - 1)
        theta = _trsolve(f.L, f.z + sd * eps, trans=1)
        denom = self.n + self.cfg.inv_kappa2
        theta1 = self.ysum / denom + math.sqrt(state.sigma2 / denom) * rng.standard_normal()
        return replace(state, theta=theta, theta1=theta1)

    def lambda_quadratic(self, state: ChainState) -> float:
        """``theta' Q theta / (2 sigma^2)`` for the current penalty."""
        c = self.cache(state.J)
        th = state.theta
        if len(th) != state.J - 1:
            raise SamplerError("coefficients do not match J; draw coefficients first")
        return float(th @ c.penalty(state.tau) @ th) / (2.0 * state.sigma2)

    def step_lambda(self, state: ChainState, rng) -> ChainState:
        beta = self.lambda_quadratic(state)
        if self.prior.lambda_prior == "ig":
            shape = self.prior.lambda_a + 0.5 * (state.J - 1)
            rate = self.prior.lambda_b + beta
            return replace(state, lam=rate / rng.gamma(shape))
        return self.step_lambda_slice(state, rng, beta)

    def step_lambda_slice(self, state: ChainState, rng, beta: float | None = None) -> ChainState:
        """Slice update under the exponential prior: auxiliary level, then truncated IG draw."""
        if beta is None:
            beta = self.lambda_quadratic(state)
        shape = 0.5 * (state.J - 3)
        assert shape > 0, "J >= 4 keeps the inverse-gamma shape positive"
        c = self.cfg.c_lambda
        # gamma = u * h(lam); h^-1(gamma) = lam - log(u) / c, computed without underflow
        upper = state.lam - math.log1p(-rng.random()) / c
        lam = sample_truncated_invgamma(shape, beta, upper, rng)
        return replace(state, lam=lam)

    def tau_log_weights(self, state: ChainState) -> np.ndarray:
        """Unnormalized log conditional of tau on the grid."""
        c = self.cache(state.J)
        th = state.theta
        qP = float(th @ c.Pt @ th)
        qG = float(th @ c.gram @ th)
        g = self.tau_grid
        scale = 2.0 * state.lam * state.sigma2
        return c.tau_det(g) - ((1.0 - g) * qP + (g / self.n) * qG) / scale

    def step_tau(self, state: ChainState, rng) -> ChainState:
        if not self.prior.has_tau:
            return state
        lw = self.tau_log_weights(state)
        if not np.any(np.isfinite(lw)):
            raise FloatingPointError("all tau grid weights are -inf")
        cdf = np.cumsum(np.exp(lw - lw.max()))
        k = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        k = min(k, len(cdf) - 1)
        return replace(state, tau=float(self.tau_grid[k]))

    def sweep(self, state: ChainState, rng) -> ChainState:
        state = self.step_J(state, rng)
        state = self.step_sigma2(state, rng)
        state = self.step_coefficients(state, rng)
        state = self.step_lambda(state, rng)
        state = self.step_tau(state, rng)
        return state

    # -- driver

    def initial_state(self) -> ChainState:
        cfg = self.cfg
        if self.move_J:
            J0 = cfg.J_min + math.ceil((cfg.J_max - cfg.J_min) / 4)
            while J0 > cfg.J_min and not np.isfinite(self.log_ml(J0, 1.0, 0.5)):
                J0 -= 1
        else:
            J0 = cfg.J_min
        lam0 = math.log(2.0) / cfg.c_lambda if self.prior.lambda_prior == "exp" else 1.0
        s2 = float(np.var(self.y, ddof=1)) if self.n > 1 else 1.0
        return ChainState(J=J0, sigma2=max(s2, 1e-12), theta1=float(self.y.mean()),
                          theta=np.zeros(J0 - 1), lam=lam0, tau=0.5)

    def run(self, seed: int | None = None, state: ChainState | None = None) -> PosteriorDraws:
        cfg = self.cfg
        rng = np.random.default_rng(cfg.seed if seed is None else seed)
        state = self.initial_state() if state is None else state
        keep = []
        for it in range(cfg.iterations):
            try:
                state = self.sweep(state, rng)
            except (linalg.LinAlgError, FloatingPointError, SamplerError) as exc:
                raise SamplerError(f"sweep {it}: {exc}") from exc
            if it >= cfg.burnin and (it - cfg.burnin) % cfg.thin == 0:
                keep.append(state)
        tau = [s.tau if self.prior.has_tau else np.nan for s in keep]
        return PosteriorDraws(
            x=self.x, degree=cfg.degree,
            J=np.array([s.J for s in keep], dtype=int),
            sigma2=np.array([s.sigma2 for s in keep]),
            lam=np.array([s.lam for s in keep]),
            tau=np.array(tau, dtype=float),
            theta1=np.array([s.theta1 for s in keep]),
            theta=[s.theta for s in keep],
            accepted=self.accepted, proposed=self.proposed,
            meta={"prior": self.prior.kind, "lambda_prior": self.prior.lambda_prior},
            _bases={J: c.basis for J, c in self._caches.items()},
        )


def run_chain(y, x, cfg: ModelConfig = ModelConfig(), rng_seed: int | None = None) -> PosteriorDraws:
    """Run the fused-prior sampler with J selection and return post-burn-in draws."""
    return GibbsSampler(y, x, cfg).run(seed=rng_seed)
