"""Kernel matrices, dual functionals and the worst-case error form.

A kernel ``K`` over the points ``x_1 .. x_{n+1}`` defines the norm
``N(f) = ||K^{-1/2} f||`` on grid functions.  Linear combinations of point
evaluations ``mu = sum_i c_i delta_{x_i}`` are represented by their coefficient
vector ``c`` and have squared dual norm ``c^T K c``.  Predicting ``f(x_{n+1})``
by ``sum_i w_i f(x_i)`` has residual functional ``c = (-w_1, .., -w_n, 1)``,
so its worst squared error over the unit ball is ``c^T K c``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.linalg import lapack

from .errors import ConstraintError, FactorizationError, StructureError

#: Relative pivot threshold used to decide positive definiteness.
DEFINITENESS_TOL = 1e-10
#: Relative asymmetry tolerance accepted for kernel matrices.
SYMMETRY_TOL = 1e-12


class Classification(str, enum.Enum):
    POSITIVE_DEFINITE = "PositiveDefinite"
    CONDITIONALLY_POSITIVE = "ConditionallyPositive"
    INDEFINITE = "Indefinite"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class KnotGrid:
    """Strictly increasing time points ``t_1 < .. < t_{n+1}``."""

    knots: np.ndarray

    def __post_init__(self):
        t = np.array(self.knots, dtype=float).ravel()
        if t.size < 2:
            raise StructureError("a knot grid needs at least two points")
        if not np.all(np.isfinite(t)):
            raise StructureError("knots must be finite")
        bad = np.flatnonzero(np.diff(t) <= 0)
        if bad.size:
            i = int(bad[0])
            raise StructureError(
                f"knots must be strictly increasing (t[{i}]={t[i]!r}, t[{i + 1}]={t[i + 1]!r})"
            )
        t.setflags(write=False)
        object.__setattr__(self, "knots", t)

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(self.knots)

    @property
    def n(self) -> int:
        """Number of intervals (the grid has ``n + 1`` knots)."""
        return self.knots.size - 1

    def __len__(self) -> int:
        return self.knots.size

    def head(self, size: int) -> KnotGrid:
        """Grid made of the first ``size`` knots."""
        return KnotGrid(self.knots[:size])

    def affine_trend(self) -> np.ndarray:
        """The ``(n+1) x 2`` matrix with columns ``1`` and ``t``."""
        return np.column_stack([np.ones_like(self.knots), self.knots])


@dataclass(frozen=True)
class Kernel:
    """A symmetric kernel matrix with its definiteness classification."""

    matrix: np.ndarray
    classification: Classification
    label: str = ""
    diagnostics: tuple[str, ...] = field(default=())

    @classmethod
    def build(cls, matrix, trend=None, label: str = "", tol: float = DEFINITENESS_TOL) -> Kernel:
        """Validate ``matrix`` (optionally against ``trend``) and wrap it."""
        K = as_symmetric(matrix)
        K.setflags(write=False)
        return cls(K, validate_kernel(K, trend, tol), label)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)


@dataclass(frozen=True)
class DualFunctional:
    """``mu = sum_i c_i delta_{x_i}`` stored as its coefficient vector."""

    coefficients: np.ndarray

    @classmethod
    def residual(cls, weights) -> DualFunctional:
        """The prediction residual ``delta_{x_{n+1}} - sum_i w_i delta_{x_i}``."""
        w = np.asarray(weights, dtype=float).ravel()
        return cls(np.append(-w, 1.0))

    def __call__(self, f) -> float:
        f = np.asarray(f, dtype=float).ravel()
        if f.shape != self.coefficients.shape:
            raise StructureError(
                f"functional of length {self.coefficients.size} applied to {f.size} values"
            )
        return float(self.coefficients @ f)


def as_matrix(K) -> np.ndarray:
    """Return the dense float array behind ``K`` (a :class:`Kernel` or array-like)."""
    if isinstance(K, Kernel):
        return K.matrix
    A = np.asarray(K, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise StructureError(f"kernel must be a square matrix, got shape {A.shape}")
    return A


def as_symmetric(K, tol: float = SYMMETRY_TOL) -> np.ndarray:
    """Check symmetry to ``tol`` relative to the largest entry and symmetrize."""
    A = as_matrix(K)
    scale = max(float(np.max(np.abs(A))), np.finfo(float).tiny) if A.size else 1.0
    asym = float(np.max(np.abs(A - A.T))) if A.size else 0.0
    if asym > tol * scale:
        raise StructureError(f"kernel is not symmetric (max |K - K^T| = {asym:.3g})")
    return 0.5 * (A + A.T)


def trend_columns(trend, rows: int | None = None) -> np.ndarray:
    """Normalize a trend specification (array or object with ``columns``) to 2-D."""
    P = np.asarray(getattr(trend, "columns", trend), dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    if P.ndim != 2:
        raise StructureError(f"trend must be a 2-D array, got {P.ndim} dimensions")
    if rows is not None and P.shape[0] != rows:
        raise StructureError(f"trend has {P.shape[0]} rows, expected {rows}")
    return P


def column_rank(A: np.ndarray) -> int:
    """Numerical rank with the usual ``sigma_max * max(shape) * eps`` cutoff."""
    if A.size == 0:
        return 0
    return int(np.linalg.matrix_rank(A))


def cholesky(A: np.ndarray, tol: float | None = None, what: str = "matrix") -> np.ndarray:
    """Lower Cholesky factor of ``A``.

    Raises :class:`FactorizationError` naming the 1-based failing pivot.  When
    ``tol`` is given, a pivot ``L_ii^2 <= tol * max(diag A)`` also counts as a
    failure.
    """
    A = np.asarray(A, dtype=float)
    if A.shape[0] == 0:
        return A.copy()
    c, info = lapack.dpotrf(A, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        raise FactorizationError(f"{what} is not positive definite (pivot {info})", pivot=int(info))
    if info < 0:
        raise StructureError(f"invalid argument {-info} passed to the Cholesky routine")
    if tol is not None:
        pivots = np.diag(c) ** 2
        threshold = tol * float(np.max(np.diag(A)))
        bad = np.flatnonzero(pivots <= threshold)
        if bad.size:
            k = int(bad[0]) + 1
            raise FactorizationError(
                f"{what} is numerically singular (pivot {k} = {pivots[k - 1]:.3g})", pivot=k
            )
    return c


def validate_kernel(matrix, trend=None, tol: float = DEFINITENESS_TOL) -> Classification:
    """Classify a symmetric kernel matrix.

    Parameters
    ----------
    matrix : (m, m) array_like
        Symmetric kernel over the whole grid.
    trend : (m, q) array_like, optional
        Trend columns.  Must have full column rank on the first ``m - 1`` rows.
    tol : float
        Pivot threshold relative to the largest diagonal entry.

    Returns
    -------
    Classification
        ``POSITIVE_DEFINITE`` when a Cholesky factorization succeeds with every
        pivot above the threshold; otherwise ``CONDITIONALLY_POSITIVE`` when
        the form restricted to weights annihilating the trend is positive
        definite; otherwise ``INDEFINITE``.
    """
    K = as_symmetric(matrix)
    m = K.shape[0]
    P = None
    if trend is not None:
        P = trend_columns(trend, rows=m)
        q = P.shape[1]
        if column_rank(P[:-1]) < q:
            raise ConstraintError(f"trend columns are rank deficient on the first {m - 1} rows")

    try:
        cholesky(K, tol=tol)
        return Classification.POSITIVE_DEFINITE
    except FactorizationError:
        pass

    if P is None or P.shape[1] == 0:
        return Classification.INDEFINITE

    Z = linalg.null_space(P.T)
    if Z.shape[1] == 0:
        # the constraints already pin every weight vector to zero
        return Classification.CONDITIONALLY_POSITIVE
    projected = Z.T @ K @ Z
    projected = 0.5 * (projected + projected.T)
    scale = float(np.max(np.abs(np.diag(K))))
    try:
        c = cholesky(projected)
    except FactorizationError:
        return Classification.INDEFINITE
    if np.min(np.diag(c) ** 2) <= tol * scale:
        return Classification.INDEFINITE
    return Classification.CONDITIONALLY_POSITIVE


def _coefficients(mu) -> np.ndarray:
    return np.asarray(getattr(mu, "coefficients", mu), dtype=float).ravel()


def dual_norm_sq(K, mu) -> float:
    """Squared dual norm ``c^T K c`` of ``mu = sum_i c_i delta_{x_i}``."""
    A = as_matrix(K)
    c = _coefficients(mu)
    if c.size != A.shape[0]:
        raise StructureError(f"functional has {c.size} coefficients, kernel is {A.shape[0]}x{A.shape[0]}")
    return float(c @ A @ c)


def worst_case_error(K, w) -> float:
    """Worst squared prediction error of weights ``w`` over the unit ball of ``K``.

    Equal to ``(-w, 1) K (-w, 1)^T``.  The error over a ball of radius ``r`` is
    ``r**2`` times this value.
    """
    A = as_matrix(K)
    w = np.asarray(w, dtype=float).ravel()
    if w.size + 1 != A.shape[0]:
        raise StructureError(f"{w.size} weights do not match a {A.shape[0]}x{A.shape[0]} kernel")
    return dual_norm_sq(A, DualFunctional.residual(w))
