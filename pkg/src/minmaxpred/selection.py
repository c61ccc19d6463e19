"""Rolling-origin evaluation of kernels and the three selection criteria.

For ``r = r_min .. n-1`` the value ``f(x_{r+1})`` is predicted from
``f(x_1 .. x_r)`` and the absolute errors are collected.  Kernels are then
compared by mean squared error (MSPE), maximum absolute error (MAXPE) and the
fraction of steps on which one kernel is strictly closer than the other.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import MinmaxError, StructureError
from .kernels import KnotGrid, as_symmetric
from .predictor import constrained_weights, minmax_weights
from .spline import kernel_set, pspline_predict

SPLINE_KERNELS = ("K0", "K1", "K2")
TREND_MODES = ("none", "affine")
ROLLING_MODES = ("submatrix", "rebuild")


@dataclass(frozen=True)
class KernelSpec:
    """How to obtain the kernel and trend for one competitor.

    ``kind`` is one of ``K0``, ``K1``, ``K2`` (spline kernels built on the
    grid), ``P`` (natural cubic spline extrapolation, rebuilt on each prefix)
    or ``matrix`` (a user supplied full-grid kernel).  ``trend`` is ``"none"``,
    ``"affine"``, an ``(N, q)`` array over the full grid, or ``None`` for the
    kind's default (none for K0, affine for K1/K2).
    """

    kind: str
    label: str = ""
    matrix: np.ndarray | None = None
    trend: object = None
    jitter: float | None = None

    def __post_init__(self):
        if self.kind not in SPLINE_KERNELS + ("P", "matrix"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "matrix" and self.matrix is None:
            raise ValueError("kind 'matrix' needs a matrix")
        if isinstance(self.trend, str) and self.trend not in TREND_MODES:
            raise ValueError(f"unknown trend mode {self.trend!r}")
        if not self.label:
            object.__setattr__(self, "label", self.kind)

    @property
    def trend_mode(self):
        if self.trend is None:
            return "affine" if self.kind in ("K1", "K2") else "none"
        return self.trend


@dataclass(frozen=True)
class Record:
    r: int
    predicted: float
    actual: float
    abs_error: float
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class RollingRun:
    kernel_label: str
    records: tuple[Record, ...]

    @property
    def successful(self) -> tuple[Record, ...]:
        return tuple(rec for rec in self.records if rec.ok)

    @property
    def failures(self) -> tuple[Record, ...]:
        return tuple(rec for rec in self.records if not rec.ok)

    def errors(self) -> np.ndarray:
        return np.array([rec.abs_error for rec in self.successful])


@dataclass(frozen=True)
class PairCount:
    wins: int
    losses: int
    ties: int

    @property
    def total(self) -> int:
        return self.wins + self.losses + self.ties

    @property
    def fraction(self) -> float:
        return self.wins / self.total if self.total else float("nan")


@dataclass(frozen=True)
class CriteriaReport:
    labels: tuple[str, ...]
    mspe: dict[str, float]
    maxpe: dict[str, float]
    wins: np.ndarray
    pairs: dict[tuple[str, str], PairCount]
    counts: dict[str, int]
    failures: dict[str, int]
    runs: dict[str, RollingRun] = field(repr=False, default_factory=dict)

    def tie_fraction(self, a: str, b: str) -> float:
        pc = self.pairs[(a, b)]
        return pc.ties / pc.total if pc.total else float("nan")

    def better(self, a: str, b: str) -> bool:
        """``a`` is statistically better than ``b`` (wins on more than half the steps)."""
        return self.pairs[(a, b)].fraction > 0.5


class _Context:
    """Full-grid kernels shared by every step of a sweep."""

    def __init__(self, grid: KnotGrid, spec: KernelSpec, mode: str):
        self.grid = grid
        self.spec = spec
        self.mode = mode
        self.full = None
        if spec.kind == "matrix":
            if mode == "rebuild":
                raise ValueError("a user supplied kernel cannot be rebuilt on sub-grids")
            self.full = as_symmetric(spec.matrix)
            if self.full.shape[0] < len(grid):
                raise StructureError(
                    f"kernel is {self.full.shape[0]}x{self.full.shape[0]} for {len(grid)} points"
                )
        elif spec.kind in SPLINE_KERNELS and mode == "submatrix":
            self.full = kernel_set(grid, check=False).kernel(spec.kind)

    def trend(self, size: int):
        mode = self.spec.trend_mode
        if isinstance(mode, str):
            return None if mode == "none" else self.grid.head(size).affine_trend()
        return np.asarray(mode, dtype=float)[:size]

    def kernel(self, size: int) -> np.ndarray:
        if self.mode == "submatrix":
            return self.full[:size, :size]
        return kernel_set(self.grid.head(size), check=False).kernel(self.spec.kind)


def _step(ctx: _Context, f: np.ndarray, r: int) -> Record:
    actual = float(f[r])
    try:
        if ctx.spec.kind == "P":
            pred = pspline_predict(ctx.grid.head(r + 1), f[:r])
        else:
            K = ctx.kernel(r + 1)
            trend = ctx.trend(r + 1)
            if trend is None:
                res = minmax_weights(K, f[:r], jitter=ctx.spec.jitter)
            else:
                res = constrained_weights(K, trend, f[:r], jitter=ctx.spec.jitter)
            pred = res.predicted
    except (MinmaxError, np.linalg.LinAlgError) as exc:
        return Record(r, float("nan"), actual, float("nan"), error=str(exc))
    return Record(r, pred, actual, abs(actual - pred))


def predict_step(series, grid, spec: KernelSpec, r: int, mode: str = "submatrix") -> Record:
    """Prediction of the ``(r+1)``-th value from the first ``r`` (``r`` is 1-based)."""
    g, f = _prepare(series, grid)
    return _step(_Context(g, spec, mode), f, r)


def _prepare(series, grid) -> tuple[KnotGrid, np.ndarray]:
    f = np.asarray(series, dtype=float).ravel()
    g = grid if isinstance(grid, KnotGrid) else KnotGrid(grid)
    if len(g) < f.size:
        raise StructureError(f"grid has {len(g)} points for {f.size} observations")
    return g, f


def rolling_predict(
    series,
    grid,
    spec: KernelSpec,
    r_min: int = 2,
    mode: str = "submatrix",
    workers: int | None = None,
) -> RollingRun:
    """Predict ``f(x_{r+1})`` from ``f(x_1..x_r)`` for every ``r`` in ``[r_min, n-1]``.

    In ``submatrix`` mode the kernel for step ``r`` is the leading
    ``(r+1) x (r+1)`` block of the kernel built on the whole grid; in
    ``rebuild`` mode it is rebuilt on the first ``r + 1`` knots.  Per-step
    solver failures are recorded, not raised.
    """
    if r_min < 2:
        raise ValueError("r_min must be at least 2")
    if mode not in ROLLING_MODES:
        raise ValueError(f"unknown rolling mode {mode!r}")
    g, f = _prepare(series, grid)
    if f.size <= r_min:
        raise StructureError(f"need more than r_min={r_min} observations, got {f.size}")
    ctx = _Context(g, spec, mode)
    steps = range(r_min, f.size)
    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            done = list(pool.map(lambda r: _step(ctx, f, r), steps))
    else:
        done = [_step(ctx, f, r) for r in steps]
    return RollingRun(spec.label, tuple(sorted(done, key=lambda rec: rec.r)))


def _errors(run) -> np.ndarray:
    e = run.errors() if isinstance(run, RollingRun) else np.asarray(run, dtype=float)
    if e.size == 0:
        raise ValueError("no successful predictions to evaluate")
    return e


def mspe(run) -> float:
    """Mean squared prediction error over the predictions actually made."""
    e = _errors(run)
    return float(np.mean(e**2))


def maxpe(run) -> float:
    """Largest absolute prediction error."""
    return float(np.max(_errors(run)))


def compare_counts(run_a: RollingRun, run_b: RollingRun, tie_tol: float = 0.0) -> PairCount:
    """Strict wins, losses and ties of ``run_a`` against ``run_b`` step by step."""
    ra = [rec.r for rec in run_a.records]
    rb = [rec.r for rec in run_b.records]
    if ra != rb:
        raise ValueError("runs cover different steps and cannot be compared")
    wins = losses = ties = 0
    for a, b in zip(run_a.records, run_b.records):
        if not (a.ok and b.ok):
            continue
        if a.abs_error < b.abs_error - tie_tol:
            wins += 1
        elif b.abs_error < a.abs_error - tie_tol:
            losses += 1
        else:
            ties += 1
    return PairCount(wins, losses, ties)


def statistical_compare(run_a: RollingRun, run_b: RollingRun, tie_tol: float = 0.0) -> float:
    """Fraction of common steps where ``run_a`` is strictly closer than ``run_b``.

    ``run_a`` is statistically better than ``run_b`` when this exceeds 1/2.
    """
    return compare_counts(run_a, run_b, tie_tol).fraction


def tournament(
    series,
    grid,
    specs,
    r_min: int = 2,
    mode: str = "submatrix",
    tie_tol: float = 0.0,
    workers: int | None = None,
) -> CriteriaReport:
    specs = list(specs)
    if len(specs) < 2:
        raise ValueError("a tournament needs at least two kernels")
    labels = tuple(s.label for s in specs)
    if len(set(labels)) != len(labels):
        raise ValueError(f"kernel labels must be unique, got {labels}")
    runs = {s.label: rolling_predict(series, grid, s, r_min, mode, workers) for s in specs}

    k = len(labels)
    W = np.zeros((k, k))
    pairs = {}
    for i, a in enumerate(labels):
        for j, b in enumerate(labels):
            if i == j:
                continue
            pc = compare_counts(runs[a], runs[b], tie_tol)
            pairs[(a, b)] = pc
            W[i, j] = pc.fraction if pc.total else 0.0
    return CriteriaReport(
        labels=labels,
        mspe={lab: mspe(runs[lab]) for lab in labels},
        maxpe={lab: maxpe(runs[lab]) for lab in labels},
        wins=W,
        pairs=pairs,
        counts={lab: len(runs[lab].successful) for lab in labels},
        failures={lab: len(runs[lab].failures) for lab in labels},
        runs=runs,
    )
