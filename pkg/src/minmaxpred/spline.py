"""Cubic splines on a knot grid and the three spline-derived kernels.

On ``[t_i, t_{i+1})`` a C2 cubic spline is::

    s(t) = p_i + q_i (t - t_i) + u_i (t - t_i)^2 / 2 + v_i (t - t_i)^3 / 6

where ``p, q, u`` are the value, slope and curvature at the knots and ``v_i``
is the (constant) third derivative on the interval.  A natural spline has
``u_1 = u_{n+1} = 0`` and is fixed by its knot values, ``u = U p``.

Kernels built on a grid (see :func:`kernel_set`):

``K0``
    inverse of the L2 Gram matrix of the natural cardinal splines.
``K1``
    ``R Q^{-1} R^T``: interior curvatures with covariance ``Q^{-1}``.
``K2``
    ``R Q R^T``: interior curvatures with covariance ``Q``.

``K1`` and ``K2`` have rank ``n - 1`` and are conditionally positive with
respect to the affine trend ``{1, t}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import InvariantError, StructureError
from .kernels import Classification, KnotGrid, cholesky, column_rank, validate_kernel
from .predictor import SemiKernel, quadratic_extension

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)


def _grid(grid) -> KnotGrid:
    return grid if isinstance(grid, KnotGrid) else KnotGrid(grid)


def _require_intervals(grid: KnotGrid, minimum: int = 2) -> None:
    if grid.n < minimum:
        raise StructureError(f"need at least {minimum + 1} knots, got {grid.n + 1}")


@dataclass(frozen=True)
class SplineModel:
    """Knot values and derivatives of a C2 cubic spline."""

    grid: KnotGrid
    p: np.ndarray
    q: np.ndarray
    u: np.ndarray
    v: np.ndarray

    @property
    def natural(self) -> bool:
        return self.u[0] == 0.0 and self.u[-1] == 0.0

    def continuity_residual(self) -> float:
        """Largest relative violation of the value, slope and curvature joins."""
        h = self.grid.gaps
        p, q, u, v = self.p, self.q, self.u, self.v
        r0 = p[:-1] + q[:-1] * h + u[:-1] * h**2 / 2 + v * h**3 / 6 - p[1:]
        r1 = q[:-1] + u[:-1] * h + v * h**2 / 2 - q[1:]
        r2 = v * h - (u[1:] - u[:-1])
        scale = 1.0 + max(np.max(np.abs(p)), np.max(np.abs(q)), np.max(np.abs(u)))
        return float(max(np.max(np.abs(r0)), np.max(np.abs(r1)), np.max(np.abs(r2))) / scale)

    def __call__(self, t):
        return evaluate(self, t)


def spline_from_002(grid, p1: float, p2: float, u) -> SplineModel:
    """Spline with ``s(t_1) = p1``, ``s(t_2) = p2`` and knot curvatures ``u``.

    Third derivatives come from the curvature differences, the first slope
    from the value join on ``[t_1, t_2]``, and the remaining values and slopes
    from the forward recursion of the value and slope joins.
    """
    g = _grid(grid)
    h = g.gaps
    u = np.asarray(u, dtype=float).ravel()
    if u.size != g.n + 1:
        raise StructureError(f"expected {g.n + 1} curvatures, got {u.size}")
    v = np.diff(u) / h
    p = np.empty(g.n + 1)
    q = np.empty(g.n + 1)
    p[0], p[1] = p1, p2
    q[0] = (p2 - p1) / h[0] - u[0] * h[0] / 2 - v[0] * h[0] ** 2 / 6
    for i in range(g.n):
        if i > 0:
            p[i + 1] = p[i] + q[i] * h[i] + u[i] * h[i] ** 2 / 2 + v[i] * h[i] ** 3 / 6
        q[i + 1] = q[i] + u[i] * h[i] + v[i] * h[i] ** 2 / 2
    return SplineModel(g, p, q, u, v)


def basis_002(grid) -> np.ndarray:
    """Knot values of the basis dual to ``(p_1, p_2, u_1, .., u_{n+1})``.

    Column ``i`` holds the knot values of :func:`spline_from_002` applied to
    the ``i``-th unit parameter vector; the result is ``(n+1) x (n+3)``.
    """
    g = _grid(grid)
    m = g.n + 3
    cols = []
    for i in range(m):
        theta = np.zeros(m)
        theta[i] = 1.0
        cols.append(spline_from_002(g, theta[0], theta[1], theta[2:]).p)
    return np.column_stack(cols)


def _second_difference(g: KnotGrid) -> np.ndarray:
    """``(n-1) x (n+1)`` matrix mapping knot values to ``6 * (slope jumps)``."""
    h = g.gaps
    n = g.n
    D = np.zeros((n - 1, n + 1))
    for j in range(1, n):
        D[j - 1, j - 1] = 6.0 / h[j - 1]
        D[j - 1, j] = -6.0 / h[j - 1] - 6.0 / h[j]
        D[j - 1, j + 1] = 6.0 / h[j]
    return D


def _curvature_system_banded(g: KnotGrid) -> np.ndarray:
    h = g.gaps
    n = g.n
    ab = np.zeros((3, n - 1))
    ab[0, 1:] = h[1:n - 1]
    ab[1, :] = 2.0 * (h[:-1] + h[1:])
    ab[2, :-1] = h[1:n - 1]
    return ab


def curvature_map(grid) -> np.ndarray:
    """Matrix ``U`` with ``(u_2, .., u_n) = U p`` for natural splines."""
    g = _grid(grid)
    _require_intervals(g)
    return linalg.solve_banded((1, 1), _curvature_system_banded(g), _second_difference(g))


def _natural_from_curvatures(g: KnotGrid, p: np.ndarray, u: np.ndarray) -> SplineModel:
    h = g.gaps
    v = np.diff(u) / h
    q = np.empty(g.n + 1)
    q[:-1] = np.diff(p) / h - h * (2.0 * u[:-1] + u[1:]) / 6.0
    q[-1] = q[-2] + u[-2] * h[-1] + v[-1] * h[-1] ** 2 / 2
    return SplineModel(g, p, q, u, v)


def natural_interpolant(grid, p) -> SplineModel:
    """Natural cubic spline through the knot values ``p``."""
    g = _grid(grid)
    p = np.asarray(p, dtype=float).ravel()
    if p.size != g.n + 1:
        raise StructureError(f"expected {g.n + 1} knot values, got {p.size}")
    u = np.zeros(g.n + 1)
    if g.n >= 2:
        u[1:-1] = linalg.solve_banded((1, 1), _curvature_system_banded(g), _second_difference(g) @ p)
    return _natural_from_curvatures(g, p, u)


def energy_matrix_Q(grid) -> np.ndarray:
    """Tridiagonal ``Q`` with ``(u_2..u_n) Q (u_2..u_n)^T = int |s''|^2`` for natural splines."""
    g = _grid(grid)
    _require_intervals(g)
    h = g.gaps
    Q = np.diag((h[:-1] + h[1:]) / 3.0)
    off = h[1:-1] / 6.0
    Q += np.diag(off, 1) + np.diag(off, -1)
    return Q


def bending_energy(model: SplineModel) -> float:
    """Exact ``int |s''(t)|^2 dt`` over the grid, interval by interval."""
    h = model.grid.gaps
    a = model.u[:-1]
    b = model.v
    # s'' = a + b (t - t_i) on each interval
    return float(np.sum(h * (a**2 + a * b * h + b**2 * h**2 / 3.0)))


def P_matrix(Q: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Semi-kernel ``U^T Q U``: knot values to the bending energy of their natural interpolant."""
    Q = np.asarray(Q, dtype=float)
    U = np.asarray(U, dtype=float)
    if Q.shape[0] != U.shape[0]:
        raise StructureError(f"Q is {Q.shape}, U is {U.shape}")
    P = U.T @ Q @ U
    return 0.5 * (P + P.T)


def _piecewise_coefficients(g: KnotGrid, values: np.ndarray):
    """Per-interval ``(p, q, u, v)`` arrays of the natural interpolants of each column."""
    h = g.gaps[:, None]
    U = curvature_map(g)
    u = np.zeros_like(values)
    u[1:-1] = U @ values
    v = np.diff(u, axis=0) / h
    q = np.diff(values, axis=0) / h - h * (2.0 * u[:-1] + u[1:]) / 6.0
    return values[:-1], q, u[:-1], v


def gram_L2(grid) -> np.ndarray:
    """``Q0[i, j] = int L_i L_j dt`` for the natural cardinal splines ``L_i``.

    Products of cubics have degree six, so four Gauss-Legendre nodes per
    interval integrate them exactly.
    """
    g = _grid(grid)
    _require_intervals(g)
    h = g.gaps
    p, q, u, v = _piecewise_coefficients(g, np.eye(g.n + 1))
    Q0 = np.zeros((g.n + 1, g.n + 1))
    for x, wt in zip(_GL_NODES, _GL_WEIGHTS):
        d = (x + 1.0) / 2.0 * h[:, None]
        vals = p + q * d + u * d**2 / 2 + v * d**3 / 6
        Q0 += (vals * (wt * h / 2.0)[:, None]).T @ vals
    return 0.5 * (Q0 + Q0.T)


def evaluate(model: SplineModel, t):
    """Evaluate the spline at ``t`` (scalar or array) inside ``[t_1, t_{n+1}]``."""
    knots = model.grid.knots
    tt = np.asarray(t, dtype=float)
    if np.any(tt < knots[0]) or np.any(tt > knots[-1]):
        raise ValueError(f"t outside [{knots[0]}, {knots[-1]}]")
    i = np.clip(np.searchsorted(knots, tt, side="right") - 1, 0, model.grid.n - 1)
    d = tt - knots[i]
    out = model.p[i] + model.q[i] * d + model.u[i] * d**2 / 2 + model.v[i] * d**3 / 6
    # exact knot values, including the right end point
    at_knot = np.searchsorted(knots, tt)
    hit = (at_knot <= model.grid.n) & (knots[np.minimum(at_knot, model.grid.n)] == tt)
    out = np.where(hit, model.p[np.minimum(at_knot, model.grid.n)], out)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SplineKernelSet:
    grid: KnotGrid
    Q: np.ndarray
    U: np.ndarray
    P: np.ndarray
    R: np.ndarray
    Q0: np.ndarray
    K0: np.ndarray
    K1: np.ndarray
    K2: np.ndarray

    @property
    def trend(self) -> np.ndarray:
        return self.grid.affine_trend()

    def matrices(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in ("Q", "U", "P", "R", "Q0", "K0", "K1", "K2")}

    def kernel(self, name: str) -> np.ndarray:
        if name not in ("K0", "K1", "K2"):
            raise KeyError(name)
        return getattr(self, name)

    def semikernel(self) -> SemiKernel:
        """Bending-energy semi-kernel: null space ``{1, t}``, complement ``R``, form ``Q``."""
        return SemiKernel(self.Q, self.trend, self.R)


def natural_columns(grid) -> np.ndarray:
    """``R``: knot values of the basis splines for ``u_2 .. u_n`` (``(n+1) x (n-1)``)."""
    g = _grid(grid)
    _require_intervals(g)
    return basis_002(g)[:, 3:g.n + 2]


def _sym(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.T)


def kernel_set(grid, check: bool = True) -> SplineKernelSet:
    """Build ``Q, U, P, R, Q0`` and the kernels ``K0, K1, K2`` on ``grid``."""
    g = _grid(grid)
    _require_intervals(g)
    Q = energy_matrix_Q(g)
    U = curvature_map(g)
    P = P_matrix(Q, U)
    R = natural_columns(g)
    Q0 = gram_L2(g)

    c0 = cholesky(Q0, what="L2 Gram matrix Q0")
    K0 = _sym(linalg.cho_solve((c0, True), np.eye(g.n + 1)))
    cq = cholesky(Q, what="energy matrix Q")
    K1 = _sym(R @ linalg.cho_solve((cq, True), R.T))
    K2 = _sym(R @ Q @ R.T)
    ks = SplineKernelSet(g, Q, U, P, R, Q0, K0, K1, K2)
    if check:
        check_kernel_set(ks)
    return ks


def check_kernel_set(ks: SplineKernelSet, tol: float = 1e-10) -> None:
    """Raise :class:`InvariantError` naming the first violated structural property."""
    n = ks.grid.n
    T = ks.trend
    if validate_kernel(ks.Q) is not Classification.POSITIVE_DEFINITE:
        raise InvariantError("Q is not positive definite")
    if validate_kernel(ks.Q0) is not Classification.POSITIVE_DEFINITE:
        raise InvariantError("Q0 is not positive definite")
    if validate_kernel(ks.K0) is not Classification.POSITIVE_DEFINITE:
        raise InvariantError("K0 is not positive definite")
    # scale by the trend magnitude: P t is a difference of large terms for raw years
    Pscale = np.linalg.norm(ks.P, 2) * np.abs(T).max(axis=0)
    if np.any(np.max(np.abs(ks.P @ T), axis=0) > tol * np.maximum(Pscale, 1.0)):
        raise InvariantError("P does not annihilate the affine trend")
    if column_rank(ks.P) != n - 1:
        raise InvariantError(f"P has rank {column_rank(ks.P)}, expected {n - 1}")
    for name in ("K1", "K2"):
        K = getattr(ks, name)
        if column_rank(K) != n - 1:
            raise InvariantError(f"{name} has rank {column_rank(K)}, expected {n - 1}")
        if validate_kernel(K, T) is not Classification.CONDITIONALLY_POSITIVE:
            raise InvariantError(f"{name} is not conditionally positive w.r.t. the affine trend")


def pspline_predict(grid, f) -> float:
    """Natural cubic spline prediction of ``f(t_{n+1})`` from ``f(t_1 .. t_n)``.

    Minimizes the bending energy ``[f, y] P [f, y]^T`` over the unknown last
    value ``y`` on the ``n + 1`` knots of ``grid``.
    """
    g = _grid(grid)
    _require_intervals(g)
    P = P_matrix(energy_matrix_Q(g), curvature_map(g))
    return quadratic_extension(P, f)
