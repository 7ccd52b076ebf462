"""Comparator fits: GCV-tuned penalized splines, Bayesian P-splines, and the
basis-selection / twofold-penalty variants that reuse the Gibbs sampler."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg, stats

from .model import ModelConfig
from .posterior import CurveSummary
from .sampler import CoefficientPrior, GibbsSampler, PosteriorDraws
from .splines import SplineBasis, bspline_matrix, eval_basis, make_knots, penalty_set, transform_map

METHOD_TAGS = ("ps30", "ps60", "bps30", "bps60", "btp30", "btp60", "bbs-zs", "bpswbs", "proposed")


@dataclass(frozen=True)
class BaselineSpec:
    """Method tag plus its method-specific settings."""

    method: str
    knots_or_Jmax: int | None = None
    a_lambda: float = 0.01
    b_lambda: float = 0.01
    eta: float = 1e-3
    lambda_grid: tuple | None = None

    def __post_init__(self):
        if self.method not in ("PS", "BPS", "BTP", "BBS_ZS", "BPSWBS", "PROPOSED"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.method in ("PS", "BPS", "BTP") and not (self.knots_or_Jmax and self.knots_or_Jmax > 0):
            raise ValueError(f"{self.method} needs a positive number of interior knots")
        if not (self.a_lambda > 0 and self.b_lambda > 0 and self.eta > 0):
            raise ValueError("hyperparameters must be positive")

    @classmethod
    def from_tag(cls, tag: str) -> "BaselineSpec":
        tag = tag.lower()
        if tag not in METHOD_TAGS:
            raise ValueError(f"unknown method tag {tag!r}; valid tags: {', '.join(METHOD_TAGS)}")
        if tag == "proposed":
            return cls("PROPOSED")
        if tag == "bbs-zs":
            return cls("BBS_ZS")
        if tag == "bpswbs":
            return cls("BPSWBS")
        return cls(tag[:-2].upper(), knots_or_Jmax=int(tag[-2:]))


def default_lambda_grid() -> np.ndarray:
    return np.logspace(-6, 6, 101)


# ---------------------------------------------------------------- PS + GCV


@dataclass
class PSFit:
    """Penalized least-squares spline at the GCV-chosen smoothing parameter."""

    grid: object  # KnotGrid
    coef: np.ndarray
    lam: float
    sigma2: float
    cov_unit: np.ndarray  # M^-1 B'B M^-1, so Var(coef) = sigma2 * cov_unit
    gcv: np.ndarray
    lambda_grid: np.ndarray
    fitted: np.ndarray
    edf: float

    def _design(self, x, order=0):
        return bspline_matrix(self.grid, x, order)

    def mean(self, x, order: int = 0) -> np.ndarray:
        return self._design(x, order) @ self.coef

    def curve(self, x, level: float = 0.95, order: int = 0) -> CurveSummary:
        X = self._design(x, order)
        m = X @ self.coef
        se = np.sqrt(self.sigma2 * np.einsum("ij,jk,ik->i", X, self.cov_unit, X))
        z = stats.norm.ppf(0.5 + level / 2)
        return CurveSummary(np.asarray(x, float), m, m - z * se, m + z * se, level)


def hat_trace(B: np.ndarray, P: np.ndarray, lam: float) -> float:
    """``trace(B (B'B + lam P)^-1 B')`` via Cholesky solves."""
    c = linalg.cho_factor(B.T @ B + lam * P)
    return float(np.trace(linalg.cho_solve(c, B.T @ B)))


def leverages(B: np.ndarray, P: np.ndarray, lam: float) -> np.ndarray:
    """Diagonal of the hat matrix."""
    c = linalg.cho_factor(B.T @ B + lam * P)
    return np.einsum("ij,ji->i", B, linalg.cho_solve(c, B.T))


def gcv_score(B, P, y, lam) -> tuple[float, float, np.ndarray]:
    """GCV score, trace of the hat matrix, and fitted values at `lam`."""
    n = len(y)
    BtB = B.T @ B
    c = linalg.cho_factor(BtB + lam * P)
    coef = linalg.cho_solve(c, B.T @ y)
    fitted = B @ coef
    tr = float(np.trace(linalg.cho_solve(c, BtB)))
    rss = float(np.sum((y - fitted) ** 2))
    return n * rss / (n - tr) ** 2, tr, coef


def fit_ps_gcv(y, x, knots: int = 30, degree: int = 3, lambda_grid=None) -> PSFit:
    y = np.asarray(y, float)
    x = np.asarray(x, float)
    J = knots + degree + 1
    grid = make_knots(J, degree)
    B = bspline_matrix(grid, x)
    P = penalty_set(J).P if J >= 4 else np.zeros((J, J))
    lams = default_lambda_grid() if lambda_grid is None else np.asarray(lambda_grid, float)
    scores = np.empty(len(lams))
    for k, lam in enumerate(lams):
        try:
            scores[k] = gcv_score(B, P, y, lam)[0]
        except linalg.LinAlgError:
            scores[k] = np.inf
    if not np.any(np.isfinite(scores)):
        raise linalg.LinAlgError("B'B + lambda P is singular on the whole lambda grid")
    # ties resolve to the smoothest fit; scores under the floor count as exact fits
    floor = 1e-14 * float(np.mean(y * y))
    best = np.flatnonzero(scores <= max(scores.min() * (1 + 1e-12), floor))[-1]
    lam = float(lams[best])
    BtB = B.T @ B
    c = linalg.cho_factor(BtB + lam * P)
    coef = linalg.cho_solve(c, B.T @ y)
    fitted = B @ coef
    Minv = linalg.cho_solve(c, np.eye(J))
    tr = float(np.trace(Minv @ BtB))
    n = len(y)
    sigma2 = float(np.sum((y - fitted) ** 2)) / (n - tr)
    return PSFit(grid=grid, coef=coef, lam=lam, sigma2=sigma2, cov_unit=Minv @ BtB @ Minv,
                 gcv=scores, lambda_grid=lams, fitted=fitted, edf=tr)


# ---------------------------------------------------------------- BPS


def _to_centered(basis: SplineBasis, thetas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    A = transform_map(basis)
    T = thetas @ A.T
    return T[:, 0], T[:, 1:]


def bps_lambda_conditional(theta: np.ndarray, P: np.ndarray, a_lambda: float, b_lambda: float,
                           rank: int) -> tuple[float, float]:
    """Shape and rate of the inverse-gamma full conditional of lambda."""
    return a_lambda + 0.5 * rank, b_lambda + 0.5 * float(theta @ P @ theta)


def fit_bps(y, x, knots: int = 30, degree: int = 3, a_lambda: float = 0.01, b_lambda: float = 0.01,
            iterations: int = 12000, burnin: int = 2000, thin: int = 1, seed: int = 0,
            fixed: dict | None = None) -> PosteriorDraws:
    """Bayesian P-splines with fixed J and an improper difference-penalty prior.

    y is standardized internally; stored draws are back-transformed to the
    response scale and re-expressed in the centered basis. `fixed` may pin
    ``lam`` and/or ``sigma2`` (used for conditional checks).
    """
    y = np.asarray(y, float)
    x = np.asarray(x, float)
    n = len(y)
    J = knots + degree + 1
    basis = eval_basis(make_knots(J, degree), x)
    B = basis.B
    P = penalty_set(J).P
    rank = int(np.linalg.matrix_rank(P))
    y_mean = float(y.mean())
    y_sd = float(y.std(ddof=1))
    if not y_sd > 0:
        raise ValueError("response is constant; cannot standardize")
    ys = (y - y_mean) / y_sd
    BtB = B.T @ B
    Bty = B.T @ ys
    fixed = fixed or {}
    lam = float(fixed.get("lam", 1.0))
    sigma2 = float(fixed.get("sigma2", 1.0))
    rng = np.random.default_rng(seed)
    kept_theta, kept_s2, kept_lam = [], [], []
    for it in range(iterations):
        prec = BtB / sigma2 + P / lam
        try:
            L = linalg.cholesky(prec, lower=True, check_finite=False)
        except linalg.LinAlgError as exc:
            raise linalg.LinAlgError(f"sweep {it}: posterior precision is not positive definite") from exc
        z = linalg.solve_triangular(L, Bty / sigma2, lower=True, check_finite=False)
        theta = linalg.solve_triangular(L, z + rng.standard_normal(J), lower=True, trans="T",
                                        check_finite=False)
        if "sigma2" not in fixed:
            r = ys - B @ theta
            sigma2 = 0.5 * float(r @ r) / rng.gamma(0.5 * n)
        if "lam" not in fixed:
            shape, rate = bps_lambda_conditional(theta, P, a_lambda, b_lambda, rank)
            lam = rate / rng.gamma(shape)
        if it >= burnin and (it - burnin) % thin == 0:
            kept_theta.append(theta)
            kept_s2.append(sigma2)
            kept_lam.append(lam)
    thetas = y_mean + y_sd * np.array(kept_theta)  # partition of unity: shift adds to every coef
    t1, tt = _to_centered(basis, thetas)
    m = len(kept_theta)
    return PosteriorDraws(
        x=x, degree=degree, J=np.full(m, J), sigma2=y_sd ** 2 * np.array(kept_s2),
        lam=np.array(kept_lam), tau=np.full(m, np.nan), theta1=t1, theta=list(tt),
        meta={"prior": "pspline", "standardized": True, "penalty_rank": rank, "y_mean": y_mean, "y_sd": y_sd,
              "lambda_scale": "standardized response"},
        _bases={J: basis},
    )


# ---------------------------------------------------------------- sampler variants


def _run(y, x, cfg, prior, fixed_J=None, seed=None) -> PosteriorDraws:
    return GibbsSampler(y, x, cfg, prior, fixed_J=fixed_J).run(seed=seed)


def fit_bbs_zs(y, x, cfg: ModelConfig = ModelConfig(), seed: int | None = None) -> PosteriorDraws:
    """Basis selection under the Zellner-Siow g-prior (flat prior on the mean)."""
    cfg = replace(cfg, kappa=math.inf)
    prior = CoefficientPrior(kind="gprior", lambda_prior="ig", lambda_a=0.5, lambda_b=0.5)
    return _run(y, x, cfg, prior, seed=seed)


def fit_btp(y, x, knots: int = 30, cfg: ModelConfig = ModelConfig(), a_lambda: float = 0.01,
            b_lambda: float = 0.01, seed: int | None = None) -> PosteriorDraws:
    """Fused twofold penalty at fixed J, inverse-gamma prior on lambda."""
    prior = CoefficientPrior(kind="fused", lambda_prior="ig", lambda_a=a_lambda, lambda_b=b_lambda)
    return _run(y, x, cfg, prior, fixed_J=knots + cfg.degree + 1, seed=seed)


def fit_bpswbs(y, x, cfg: ModelConfig = ModelConfig(), eta: float = 1e-3,
               seed: int | None = None) -> PosteriorDraws:
    """Ridged P-spline prior ``(Pt + eta I)`` with basis selection; lambda ~ IG(1/2, 1/2)."""
    prior = CoefficientPrior(kind="ridged", lambda_prior="ig", lambda_a=0.5, lambda_b=0.5, eta=eta)
    return _run(y, x, cfg, prior, seed=seed)


def fit_proposed(y, x, cfg: ModelConfig = ModelConfig(), seed: int | None = None) -> PosteriorDraws:
    return _run(y, x, cfg, CoefficientPrior(), seed=seed)
