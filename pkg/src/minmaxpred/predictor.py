"""Min-max linear predictors of the next value ``f(x_{n+1})``.

Every predictor here is linear in the observed values, ``sum_i w_i f(x_i)``,
and its weights minimize the worst-case error form ``(-w, 1) K (-w, 1)^T``,
optionally subject to reproducing a trend exactly::

    sum_i w_i p_k(x_i) = p_k(x_{n+1}),   k = 1 .. q

The same weights are the universal kriging (BLUP) weights when ``K`` is read
as a covariance matrix and the trend as the mean model.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from .errors import ConstraintError, FactorizationError, InvariantError, StructureError
from .kernels import (
    DEFINITENESS_TOL,
    KnotGrid,
    as_matrix,
    cholesky,
    column_rank,
    trend_columns,
    worst_case_error,
)

#: Condition number above which results carry an ill-conditioning diagnostic.
CONDITION_WARNING = 1e12
#: Tolerance on the trend constraints checked after solving.
CONSTRAINT_TOL = 1e-8


@dataclass(frozen=True)
class Trend:
    """Trend columns ``p_1 .. p_q`` evaluated on all ``n + 1`` grid points."""

    columns: np.ndarray

    def __post_init__(self):
        P = trend_columns(self.columns)
        if P.shape[1] > P.shape[0] - 1:
            raise ConstraintError(
                f"{P.shape[1]} trend columns cannot be reproduced from {P.shape[0] - 1} observations"
            )
        if column_rank(P[:-1]) < P.shape[1]:
            raise ConstraintError("trend columns are rank deficient on the observed points")
        P.setflags(write=False)
        object.__setattr__(self, "columns", P)

    @classmethod
    def constant(cls, size: int) -> Trend:
        return cls(np.ones((size, 1)))

    @classmethod
    def affine(cls, grid) -> Trend:
        """Columns ``1`` and ``t`` on ``grid`` (a :class:`KnotGrid` or sequence of times)."""
        if not isinstance(grid, KnotGrid):
            grid = KnotGrid(grid)
        return cls(grid.affine_trend())

    @property
    def q(self) -> int:
        return self.columns.shape[1]

    def head(self, size: int) -> Trend:
        return Trend(self.columns[:size])


@dataclass(frozen=True)
class PredictionResult:
    weights: np.ndarray
    worst_error: float
    multipliers: np.ndarray = field(default_factory=lambda: np.empty(0))
    predicted: float | None = None
    alpha: np.ndarray | None = None
    diagnostics: tuple[str, ...] = ()

    def apply(self, f) -> PredictionResult:
        """Copy of this result with ``predicted`` computed from observations ``f``."""
        return replace(self, predicted=predict(self.weights, f))


@dataclass(frozen=True)
class ConstraintSolutionSpace:
    """All weight vectors meeting the trend constraints: ``particular + homogeneous @ v``."""

    particular: np.ndarray
    homogeneous: np.ndarray

    @property
    def n(self) -> int:
        return self.particular.size

    def weights(self, reduced) -> np.ndarray:
        return self.particular + self.homogeneous @ np.asarray(reduced, dtype=float)

    def functionals(self) -> np.ndarray:
        """``(n+1) x (n+1-q)`` matrix whose columns are the reduced functionals.

        The first ``n - q`` columns are the homogeneous solutions padded with a
        zero; the last one is the residual ``delta_{x_{n+1}} - sum_i z_i delta_{x_i}``
        of the particular solution.
        """
        Z = np.vstack([self.homogeneous, np.zeros((1, self.homogeneous.shape[1]))])
        last = np.append(-self.particular, 1.0)
        return np.column_stack([Z, last])


@dataclass(frozen=True)
class ReducedKernel:
    matrix: np.ndarray


@dataclass(frozen=True)
class SemiKernel:
    """Positive semidefinite form whose null space is spanned by a trend.

    Grid functions are written ``f = null_basis @ theta + complement_basis @ u``
    and the semi-norm is ``u^T form u``.
    """

    form: np.ndarray
    null_basis: np.ndarray
    complement_basis: np.ndarray

    def __post_init__(self):
        Qf = as_matrix(self.form)
        N = trend_columns(self.null_basis)
        R = trend_columns(self.complement_basis, rows=N.shape[0])
        if N.shape[1] + R.shape[1] != N.shape[0]:
            raise StructureError(
                f"basis has {N.shape[1] + R.shape[1]} columns for {N.shape[0]} grid points"
            )
        if Qf.shape[0] != R.shape[1]:
            raise StructureError(f"form is {Qf.shape[0]}x{Qf.shape[0]}, complement has {R.shape[1]} columns")
        if column_rank(np.column_stack([N, R])) < N.shape[0]:
            raise StructureError("null and complement columns do not form a basis")
        cholesky(Qf, tol=DEFINITENESS_TOL, what="semi-kernel form")
        object.__setattr__(self, "form", Qf)
        object.__setattr__(self, "null_basis", N)
        object.__setattr__(self, "complement_basis", R)

    def coordinates(self, f) -> np.ndarray:
        """Complement coordinates ``u`` of the grid function ``f``."""
        B = np.column_stack([self.null_basis, self.complement_basis])
        theta = linalg.solve(B, np.asarray(f, dtype=float))
        return theta[self.null_basis.shape[1]:]

    def seminorm_sq(self, f) -> float:
        u = self.coordinates(f)
        return float(u @ self.form @ u)


def _leading_factor(A: np.ndarray, jitter: float | None, what: str) -> np.ndarray:
    n = A.shape[0] - 1
    block = A[:n, :n]
    if jitter:
        block = block + jitter * np.eye(n)
    return cholesky(block, tol=DEFINITENESS_TOL, what=what)


def _condition_note(M: np.ndarray, what: str) -> tuple[str, ...]:
    if M.size == 0:
        return ()
    cond = np.linalg.cond(M)
    if cond > CONDITION_WARNING:
        return (f"{what} is ill-conditioned (condition estimate {cond:.3g})",)
    return ()


def minmax_weights(K, f=None, jitter: float | None = None) -> PredictionResult:
    """Unconstrained min-max weights, solving ``K_n w = k(x_{n+1}, x_{1..n})``.

    ``K_n`` is the leading ``n x n`` block and must be positive definite;
    otherwise :class:`FactorizationError` reports the failing pivot.  With
    ``jitter`` the block is replaced by ``K_n + jitter * I``.
    """
    A = as_matrix(K)
    n = A.shape[0] - 1
    if n < 1:
        raise StructureError("kernel must cover at least two points")
    c = _leading_factor(A, jitter, "leading kernel block")
    w = linalg.cho_solve((c, True), A[:n, n])
    result = PredictionResult(
        weights=w,
        worst_error=worst_case_error(A, w),
        diagnostics=_condition_note(A[:n, :n], "leading kernel block"),
    )
    return result if f is None else result.apply(f)


def predict(w, f) -> float:
    """``sum_i w_i f(x_i)``."""
    w = np.asarray(w, dtype=float).ravel()
    f = np.asarray(f, dtype=float).ravel()
    if w.shape != f.shape:
        raise StructureError(f"{w.size} weights applied to {f.size} observations")
    return float(w @ f)


def interpolant_coefficients(K, f, jitter: float | None = None) -> np.ndarray:
    """Coefficients ``alpha`` of the kernel interpolant ``sum_j alpha_j k_j`` of ``f``."""
    A = as_matrix(K)
    n = A.shape[0] - 1
    f = np.asarray(f, dtype=float).ravel()
    if f.size != n:
        raise StructureError(f"expected {n} observations, got {f.size}")
    c = _leading_factor(A, jitter, "leading kernel block")
    return linalg.cho_solve((c, True), f)


def interpolant_predict(K, f, jitter: float | None = None) -> float:
    """Value at ``x_{n+1}`` of the kernel interpolant of ``f(x_1 .. x_n)``."""
    A = as_matrix(K)
    alpha = interpolant_coefficients(A, f, jitter)
    return float(alpha @ A[-1, :-1])


def interpolation_error(K, f) -> float:
    """Exact error ``f(x_{n+1}) - f*(x_{n+1})`` from the full data vector.

    Computed as the last coordinate of ``f`` in the basis of kernel columns
    times the error of interpolating the last column, which needs ``K`` to be
    positive definite on all ``n + 1`` points.
    """
    A = as_matrix(K)
    f = np.asarray(f, dtype=float).ravel()
    if f.size != A.shape[0]:
        raise StructureError(f"expected {A.shape[0]} values, got {f.size}")
    c = cholesky(A, tol=DEFINITENESS_TOL, what="kernel")
    coordinate = linalg.cho_solve((c, True), f)[-1]
    w = minmax_weights(A).weights
    return float(coordinate * (A[-1, -1] - w @ A[:-1, -1]))


def _trend_matrix(trend, rows: int) -> np.ndarray:
    P = trend_columns(trend, rows=rows)
    q = P.shape[1]
    if q > rows - 1:
        raise ConstraintError(f"{q} trend columns cannot be reproduced from {rows - 1} observations")
    if column_rank(P[:-1]) < q:
        raise ConstraintError("trend columns are rank deficient on the observed points")
    return P


def constrained_weights(K, trend, f=None, jitter: float | None = None) -> PredictionResult:
    """Min-max weights reproducing ``trend`` exactly (universal kriging weights).

    Solves the symmetric indefinite saddle system::

        [ K_n   P_n ] [ w      ]   [ k(x_{1..n}, x_{n+1}) ]
        [ P_n^T  0  ] [ lambda ] = [ p(x_{n+1})           ]

    with a Bunch-Kaufman factorization.  The trend columns are orthonormalized
    and rescaled internally; ``multipliers`` are reported for the original
    columns.
    """
    A = as_matrix(K)
    m = A.shape[0]
    n = m - 1
    P = _trend_matrix(trend, m)
    q = P.shape[1]
    Kn = A[:n, :n]
    if jitter:
        Kn = Kn + jitter * np.eye(n)

    # recombine the trend columns; the constraint set is unchanged
    _, Rn = linalg.qr(P[:n], mode="economic")
    scale = np.sqrt(max(float(np.max(np.abs(np.diag(Kn)))), np.finfo(float).tiny))
    C = linalg.solve_triangular(Rn, np.eye(q)) * scale
    Ps = P @ C

    M = np.zeros((n + q, n + q))
    M[:n, :n] = Kn
    M[:n, n:] = Ps[:n]
    M[n:, :n] = Ps[:n].T
    rhs = np.concatenate([A[:n, n], Ps[n]])
    try:
        sol = linalg.solve(M, rhs, assume_a="sym", check_finite=True)
    except linalg.LinAlgError as exc:
        raise FactorizationError(
            f"saddle system is singular; kernel is not conditionally positive w.r.t. the trend ({exc})"
        ) from exc
    w = sol[:n]
    lam = C @ sol[n:]

    notes = list(_condition_note(M, "saddle system"))
    residual = np.abs(P[:n].T @ w - P[n])
    bound = CONSTRAINT_TOL * (1.0 + np.abs(P[:n]).T @ np.abs(w))
    if np.any(residual > bound):
        raise FactorizationError(
            f"trend constraints violated after solve (max residual {residual.max():.3g}); "
            "kernel is not conditionally positive w.r.t. the trend"
        )
    result = PredictionResult(
        weights=w,
        worst_error=worst_case_error(A, w),
        multipliers=lam,
        diagnostics=tuple(notes),
    )
    return result if f is None else result.apply(f)


def blup_predict(K, trend, f) -> float:
    """Best linear unbiased predictor with covariance ``K`` and mean spanned by ``trend``.

    The kriging variance ``var(Y_{n+1} - sum_i w_i Y_i)`` is the worst-case
    error form, so this is exactly :func:`constrained_weights` applied to ``f``.
    """
    return constrained_weights(K, trend, f).predicted


def constraint_solution_space(trend) -> ConstraintSolutionSpace:
    """Minimum-norm particular solution and orthonormal null basis of the constraints."""
    P = _trend_matrix(trend, trend_columns(trend).shape[0])
    n = P.shape[0] - 1
    Pn, target = P[:n], P[n]
    z1, *_ = linalg.lstsq(Pn.T, target)
    Z = linalg.null_space(Pn.T)
    if Z.shape[1] != n - P.shape[1]:
        raise ConstraintError("trend columns are rank deficient on the observed points")

    scale = 1.0 + np.abs(Pn).T @ np.abs(z1)
    if np.any(np.abs(Pn.T @ z1 - target) > 1e-10 * scale):
        raise InvariantError("particular solution does not satisfy the trend constraints")
    if Z.size and np.max(np.abs(Pn.T @ Z)) > 1e-10 * (1.0 + np.max(np.abs(Pn))):
        raise InvariantError("null basis does not annihilate the trend constraints")
    return ConstraintSolutionSpace(z1, Z)


def reduced_kernel(K, space: ConstraintSolutionSpace) -> ReducedKernel:
    """Kernel of the reduced functionals, ``M^T K M`` with ``M = space.functionals()``."""
    A = as_matrix(K)
    if A.shape[0] != space.n + 1:
        raise StructureError(f"kernel is {A.shape[0]}x{A.shape[0]}, constraint space has n={space.n}")
    M = space.functionals()
    Kt = M.T @ A @ M
    return ReducedKernel(0.5 * (Kt + Kt.T))


def reduced_weights(Kt: ReducedKernel, space: ConstraintSolutionSpace) -> np.ndarray:
    """Full weight vector obtained by unconstrained minimization over the reduced coordinates."""
    M = np.asarray(Kt.matrix, dtype=float)
    k = M.shape[0] - 1
    if k != space.homogeneous.shape[1]:
        raise StructureError("reduced kernel does not match the constraint space")
    if k == 0:
        return space.particular.copy()
    c = cholesky(M[:k, :k], tol=DEFINITENESS_TOL, what="reduced kernel")
    wt = linalg.cho_solve((c, True), M[:k, k])
    return space.weights(wt)


def reduced_predict(Kt: ReducedKernel, space: ConstraintSolutionSpace, f) -> float:
    """Constrained prediction computed through the reduced kernel."""
    f = np.asarray(f, dtype=float).ravel()
    if f.size != space.n:
        raise StructureError(f"expected {space.n} observations, got {f.size}")
    M = np.asarray(Kt.matrix, dtype=float)
    k = M.shape[0] - 1
    base = float(space.particular @ f)
    if k == 0:
        return base
    c = cholesky(M[:k, :k], tol=DEFINITENESS_TOL, what="reduced kernel")
    wt = linalg.cho_solve((c, True), M[:k, k])
    return base + float(wt @ (space.homogeneous.T @ f))


def semikernel_worst_error(sk: SemiKernel, w, tol: float = CONSTRAINT_TOL) -> float:
    """Worst squared error of ``w`` over ``{f : seminorm(f) <= 1}``.

    Only finite for weights reproducing the null space, which is checked.
    Equal to ``(-w, 1) R form^{-1} R^T (-w, 1)^T`` with ``R`` the complement basis.
    """
    w = np.asarray(w, dtype=float).ravel()
    N = sk.null_basis
    if w.size + 1 != N.shape[0]:
        raise StructureError(f"{w.size} weights for a grid of {N.shape[0]} points")
    residual = np.abs(N[:-1].T @ w - N[-1])
    if np.any(residual > tol * (1.0 + np.abs(N[:-1]).T @ np.abs(w))):
        raise ConstraintError(
            f"weights do not reproduce the null space (max residual {residual.max():.3g})"
        )
    a = sk.complement_basis.T @ np.append(-w, 1.0)
    c = cholesky(sk.form, tol=DEFINITENESS_TOL, what="semi-kernel form")
    return float(a @ linalg.cho_solve((c, True), a))


def quadratic_extension(G, f) -> float:
    """Value ``y`` minimizing ``[f, y] G [f, y]^T`` for fixed observations ``f``.

    With ``G = K^{-1}`` this is the kernel spline prediction; with the
    bending-energy matrix it is the natural cubic spline prediction.
    """
    G = as_matrix(G)
    f = np.asarray(f, dtype=float).ravel()
    if f.size + 1 != G.shape[0]:
        raise StructureError(f"expected {G.shape[0] - 1} observations, got {f.size}")
    if not G[-1, -1] > 0:
        raise FactorizationError("quadratic form is not strictly convex in the last value")
    return float(-(G[-1, :-1] @ f) / G[-1, -1])
