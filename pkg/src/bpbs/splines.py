"""B-spline bases on equidistant clamped knots, centering, and difference penalties."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class KnotGrid:
    """Clamped knot vector on [0, 1] with equally spaced interior knots."""

    degree: int
    n_interior: int
    knots: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        """Basis dimension ``J = degree + n_interior + 1``."""
        return self.degree + self.n_interior + 1

    @property
    def interior(self) -> np.ndarray:
        return self.knots[self.degree + 1 : self.degree + 1 + self.n_interior]


def make_knots(J: int, degree: int = 3) -> KnotGrid:
    """Knot grid giving a basis of dimension `J` for splines of the given degree."""
    if degree < 1:
        raise ValueError(f"degree must be >= 1, got {degree}")
    if J < degree + 1:
        raise ValueError(
            f"basis dimension J={J} is below the polynomial order {degree + 1}"
        )
    K = J - degree - 1
    interior = np.arange(1, K + 1) / (K + 1)
    knots = np.concatenate([np.zeros(degree + 1), interior, np.ones(degree + 1)])
    knots.setflags(write=False)
    return KnotGrid(degree=degree, n_interior=K, knots=knots)


def _find_span(knots: np.ndarray, degree: int, x: np.ndarray) -> np.ndarray:
    # Half-open spans [t_s, t_{s+1}); x = 1 belongs to the last nonempty span.
    m = len(knots) - degree - 1
    span = np.searchsorted(knots, x, side="right") - 1
    return np.clip(span, degree, m - 1)


def _local_basis(knots: np.ndarray, span: np.ndarray, q: int, x: np.ndarray) -> np.ndarray:
    """Nonzero degree-`q` B-splines ``B_{s-q}, ..., B_s`` at each x (de Boor triangle)."""
    n = len(x)
    N = np.zeros((n, q + 1))
    N[:, 0] = 1.0
    left = np.empty((n, q + 1))
    right = np.empty((n, q + 1))
    for j in range(1, q + 1):
        left[:, j] = x - knots[span + 1 - j]
        right[:, j] = knots[span + j] - x
        saved = np.zeros(n)
        for r in range(j):
            temp = N[:, r] / (right[:, r + 1] + left[:, j - r])
            N[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        N[:, j] = saved
    return N


def _raise_degree_derivative(
    knots: np.ndarray, span: np.ndarray, V: np.ndarray, q: int
) -> np.ndarray:
    """Map local values of (derivatives of) degree-q splines to derivatives of degree q+1.

    Uses ``B'_{j,q+1} = (q+1) [B_{j,q} / (t_{j+q+1} - t_j) - B_{j+1,q} / (t_{j+q+2} - t_{j+1})]``
    with the convention 0/0 = 0.
    """
    n = V.shape[0]
    p = q + 1
    out = np.zeros((n, p + 1))
    # local column k of the output corresponds to global index j = span - p + k
    for k in range(p + 1):
        j = span - p + k
        if k >= 1:
            # B_{j,q} is local column k-1 of V
            den = knots[j + q + 1] - knots[j]
            with np.errstate(divide="ignore", invalid="ignore"):
                out[:, k] += np.where(den > 0, V[:, k - 1] / den, 0.0)
        if k <= q:
            den = knots[j + q + 2] - knots[j + 1]
            with np.errstate(divide="ignore", invalid="ignore"):
                out[:, k] -= np.where(den > 0, V[:, k] / den, 0.0)
    return p * out


def bspline_matrix(grid: KnotGrid, x, order: int = 0) -> np.ndarray:
    """Dense ``n x J`` matrix of B-spline values (or derivatives) at `x`."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    p = grid.degree
    if order < 0 or order > p:
        raise ValueError(f"derivative order {order} not available for degree {p}")
    if x.size == 0:
        raise ValueError("empty evaluation points")
    if np.any(~np.isfinite(x)) or x.min() < 0.0 or x.max() > 1.0:
        raise ValueError("evaluation points must lie in [0, 1]")
    t = grid.knots
    span = _find_span(t, p, x)
    q = p - order
    V = _local_basis(t, span, q, x)
    for deg in range(q, p):
        V = _raise_degree_derivative(t, span, V, deg)
    B = np.zeros((len(x), grid.dim))
    cols = span[:, None] - p + np.arange(p + 1)[None, :]
    np.put_along_axis(B, cols, V, axis=1)
    return B


def eval_derivative_basis(grid: KnotGrid, x, order: int) -> np.ndarray:
    """Matrix of first or second derivatives ``B_j^{(order)}(x_i)``."""
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    return bspline_matrix(grid, x, order)


@dataclass(frozen=True)
class SplineBasis:
    """Raw and centered B-spline design matrices at fixed design points.

    The centered matrix drops the first B-spline and subtracts from the
    remaining columns their means over the design points, so that
    ``f(x) = theta1 + Bt(x) @ theta`` separates the global mean.
    """

    grid: KnotGrid
    x: np.ndarray = field(repr=False)
    B: np.ndarray = field(repr=False)
    col_means: np.ndarray = field(repr=False)

    @property
    def J(self) -> int:
        return self.grid.dim

    @property
    def n(self) -> int:
        return len(self.x)

    @cached_property
    def Bt(self) -> np.ndarray:
        return self.B[:, 1:] - self.col_means[1:]

    @cached_property
    def gram(self) -> np.ndarray:
        """``Bt.T @ Bt``."""
        return self.Bt.T @ self.Bt

    def centered_at(self, x, order: int = 0) -> np.ndarray:
        """Centered basis (or its derivative) at new points, using the design-point means."""
        Bx = bspline_matrix(self.grid, x, order)
        if order == 0:
            return Bx[:, 1:] - self.col_means[1:]
        return Bx[:, 1:]


def eval_basis(grid: KnotGrid, x) -> SplineBasis:
    """Evaluate the basis of `grid` at the design points `x`."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("design points must be a nonempty 1-d array")
    B = bspline_matrix(grid, x)
    return SplineBasis(grid=grid, x=x, B=B, col_means=B.mean(axis=0))


@dataclass(frozen=True)
class PenaltySet:
    D: np.ndarray = field(repr=False)
    Dt: np.ndarray = field(repr=False)
    P: np.ndarray = field(repr=False)
    Pt: np.ndarray = field(repr=False)

    @property
    def J(self) -> int:
        return self.D.shape[1]


def difference_matrix(J: int, order: int = 2) -> np.ndarray:
    return np.diff(np.eye(J), order, axis=0)


def penalty_set(J: int) -> PenaltySet:
    """Second-difference matrix, its first-column-dropped version, and both Gram forms."""
    if J < 4:
        raise ValueError(f"penalty matrices need J >= 4, got {J}")
    D = difference_matrix(J, 2)
    Dt = D[:, 1:]
    return PenaltySet(D=D, Dt=Dt, P=D.T @ D, Pt=Dt.T @ Dt)


def transform_map(basis: SplineBasis) -> np.ndarray:
    """Linear map from raw B-spline coefficients to ``(theta1, theta_2..theta_J)``.

    First row holds the design-point column means; row j (j >= 2) is
    ``e_j - e_1``.
    """
    J = basis.J
    A = np.zeros((J, J))
    A[0] = basis.col_means
    A[1:, 0] = -1.0
    A[1:, 1:] = np.eye(J - 1)
    # det(A) = sum of column means, which is 1 for a partition of unity
    det = A[0].sum()
    if not np.isfinite(det) or abs(det) < 1e-8:
        raise np.linalg.LinAlgError("coefficient transform is singular")
    return A


def greville_abscissae(grid: KnotGrid) -> np.ndarray:
    """Knot averages; coefficients equal to an affine function here reproduce it exactly."""
    p = grid.degree
    t = grid.knots
    return np.array([t[j + 1 : j + p + 1].mean() for j in range(grid.dim)])
