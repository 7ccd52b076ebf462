"""Fused P-spline / g-prior model: hyperpriors, precision matrices, marginal likelihood."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np
from scipy import linalg
from scipy.special import gammaln, logsumexp

from .splines import PenaltySet, SplineBasis


@dataclass(frozen=True)
class ModelConfig:
    """Fixed hyperparameters and MCMC settings.

    ``J_max=None`` resolves to ``min(n, 150)`` once the sample size is known
    (see :meth:`resolve`). ``kappa=inf`` gives a flat prior on the global mean.
    """

    kappa: float = 1e7
    c_lambda: float = 0.315
    delta: float = 0.05
    nu: float = 0.9
    a_sigma: float = 0.0
    b_sigma: float = 0.0
    degree: int = 3
    J_min: int = 4
    J_max: int | None = None
    tau_grid_size: int = 201
    iterations: int = 12000
    burnin: int = 2000
    thin: int = 1
    seed: int = 0

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if not self.c_lambda > 0:
            raise ValueError("c_lambda must be positive")
        if not 0.0 < self.delta < 0.5:
            raise ValueError("delta must lie in (0, 0.5)")
        if not 0.0 < self.nu < 1.0:
            raise ValueError("nu must lie in (0, 1)")
        if self.a_sigma < 0 or self.b_sigma < 0:
            raise ValueError("a_sigma and b_sigma must be nonnegative")
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        if self.J_min < self.degree + 1 or self.J_min < 4:
            raise ValueError("J_min must be >= max(4, degree + 1)")
        if self.J_max is not None and self.J_max < self.J_min:
            raise ValueError("J_max must be >= J_min")
        if self.tau_grid_size < 2:
            raise ValueError("tau_grid_size must be >= 2")
        if self.iterations < 1 or not 0 <= self.burnin < self.iterations or self.thin < 1:
            raise ValueError("need iterations > burnin >= 0 and thin >= 1")

    def resolve(self, n: int) -> "ModelConfig":
        """Fill in ``J_max`` for sample size `n` and check it against `n`."""
        J_max = min(n, 150) if self.J_max is None else self.J_max
        if J_max > n:
            raise ValueError(f"J_max={J_max} exceeds the sample size n={n}")
        if J_max < self.J_min:
            raise ValueError(f"sample size n={n} too small for J_min={self.J_min}")
        return replace(self, J_max=J_max)

    @property
    def inv_kappa2(self) -> float:
        return 0.0 if math.isinf(self.kappa) else self.kappa ** -2

    def tau_grid(self) -> np.ndarray:
        """Equispaced cell midpoints covering (delta, 1 - delta)."""
        m = self.tau_grid_size
        width = (1.0 - 2.0 * self.delta) / m
        return self.delta + (np.arange(m) + 0.5) * width

    @classmethod
    def field_types(cls) -> dict:
        hints = {"J_max": int}
        return {f.name: hints.get(f.name, type(f.default)) for f in fields(cls)}


# ---------------------------------------------------------------- hyperpriors


def log_prior_J(J: int, cfg: ModelConfig) -> float:
    """Truncated geometric log mass ``J log nu - log sum_j nu^j``."""
    if cfg.J_max is None:
        raise ValueError("config must be resolved (J_max set) before evaluating the J prior")
    if J < cfg.J_min or J > cfg.J_max:
        return -np.inf
    support = np.arange(cfg.J_min, cfg.J_max + 1)
    log_nu = math.log(cfg.nu)
    return J * log_nu - logsumexp(support * log_nu)


def log_prior_lambda(lam: float, cfg: ModelConfig) -> float:
    """Exponential(c_lambda) log density."""
    if lam < 0:
        return -np.inf
    return math.log(cfg.c_lambda) - cfg.c_lambda * lam


def log_prior_tau(tau: float, cfg: ModelConfig) -> float:
    """Uniform log density on (delta, 1 - delta)."""
    if cfg.delta < tau < 1.0 - cfg.delta:
        return -math.log(1.0 - 2.0 * cfg.delta)
    return -np.inf


# ---------------------------------------------------------------- precision


@dataclass(frozen=True)
class PrecisionParts:
    J: int
    Q: np.ndarray
    Omega: np.ndarray
    chol: np.ndarray  # lower Cholesky factor of Omega


def fused_penalty(Pt: np.ndarray, gram: np.ndarray, n: int, tau: float) -> np.ndarray:
    """``(1 - tau) Pt + tau / n * gram``."""
    return (1.0 - tau) * Pt + (tau / n) * gram


def build_precision(
    basis: SplineBasis, penalties: PenaltySet, lam: float, tau: float
) -> PrecisionParts:
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    gram = basis.gram
    Q = fused_penalty(penalties.Pt, gram, basis.n, tau)
    Omega = Q / lam + gram
    try:
        L = linalg.cholesky(Omega, lower=True)
    except linalg.LinAlgError as exc:
        raise linalg.LinAlgError(
            f"Omega is not positive definite at J={basis.J}: the centered basis is "
            "rank deficient (J too large for the design?)"
        ) from exc
    return PrecisionParts(J=basis.J, Q=Q, Omega=Omega, chol=L)


def _chol_logdet(L: np.ndarray) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def residual_form(yty: float, ysum: float, n: int, inv_kappa2: float, b: np.ndarray, L: np.ndarray) -> float:
    """``y'y - (y'1)^2 / (n + kappa^-2) - b' Omega^-1 b`` with ``b = Bt'y``, Omega = L L'."""
    z = linalg.solve_triangular(L, b, lower=True, check_finite=False)
    return yty - ysum * ysum / (n + inv_kappa2) - float(z @ z)


def log_ml_from_parts(
    logdet_prior: float,
    logdet_post: float,
    S: float,
    n: int,
    cfg: ModelConfig,
) -> float:
    """Normal-inverse-gamma log marginal likelihood from its sufficient pieces.

    ``logdet_prior`` is ``log|Q / lambda|`` (prior precision of the centered
    coefficients, up to sigma^2), ``logdet_post`` is ``log|Omega|``, and `S`
    the residual quadratic form.
    """
    a = cfg.a_sigma + 0.5 * n
    rate = cfg.b_sigma + 0.5 * S
    if not rate > 0:
        raise FloatingPointError(f"nonpositive inverse-gamma rate {rate!r} in marginal likelihood")
    ik2 = cfg.inv_kappa2
    out = -0.5 * n * math.log(2.0 * math.pi)
    if ik2 > 0:
        out += 0.5 * (math.log(ik2) - math.log(n + ik2))
    else:
        out -= 0.5 * math.log(n)  # flat-prior limit, rescaled by kappa
    out += 0.5 * (logdet_prior - logdet_post)
    out += gammaln(a) - a * math.log(rate)
    if cfg.a_sigma > 0 and cfg.b_sigma > 0:
        out += cfg.a_sigma * math.log(cfg.b_sigma) - gammaln(cfg.a_sigma)
    return out


def log_marginal_likelihood(
    y,
    basis: SplineBasis,
    penalties: PenaltySet,
    lam: float,
    tau: float,
    cfg: ModelConfig,
) -> float:
    """``log p(y | J, lambda, tau)`` with the coefficients and sigma^2 integrated out."""
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n < 2:
        raise ValueError("need at least two observations")
    parts = build_precision(basis, penalties, lam, tau)
    LQ = linalg.cholesky(parts.Q, lower=True)
    logdet_prior = _chol_logdet(LQ) - (basis.J - 1) * math.log(lam)
    S = residual_form(float(y @ y), float(y.sum()), n, cfg.inv_kappa2, basis.Bt.T @ y, parts.chol)
    return log_ml_from_parts(logdet_prior, _chol_logdet(parts.chol), S, n, cfg)
