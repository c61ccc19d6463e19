"""Command line front end.

Subcommands::

    minmaxpred kernels  SERIES   dump Q, U, P, R, Q0, K0, K1, K2 for the series grid
    minmaxpred predict  SERIES   one-step prediction per kernel
    minmaxpred evaluate SERIES   rolling-origin MSPE / MAXPE / win fractions
    minmaxpred splinefit SERIES  natural spline samples through each prediction
    minmaxpred weights  SERIES   optimal weight vectors per kernel

``SERIES`` is a ``time,value`` CSV file.  Output goes to ``--out``, else to
``$MINMAXPRED_OUTPUT_DIR/<command>.<ext>`` when that variable is set, else to
standard output.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__
from .errors import (
    ConstraintError,
    FactorizationError,
    InvariantError,
    MinmaxError,
    ParseError,
    StructureError,
)
from .io import FORMATS, Series, dumps_json, read_matrix, read_series, render_matrices, render_rows
from .kernels import Classification, KnotGrid, validate_kernel
from .predictor import constrained_weights, interpolation_error, minmax_weights
from .selection import KernelSpec, tournament
from .spline import evaluate, kernel_set, natural_interpolant, pspline_predict

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_INVARIANT = 4
EXIT_SOLVER = 5

OUTPUT_DIR_ENV = "MINMAXPRED_OUTPUT_DIR"
DEFAULT_KERNELS = ("K0", "K1", "K2")
_EXT = {"table": "txt", "csv": "csv", "json": "json"}


@dataclass(frozen=True)
class RunConfig:
    kernels: tuple[str, ...] = DEFAULT_KERNELS
    trend: str | None = None
    r_min: int = 2
    tie_tol: float = 0.0
    mode: str = "submatrix"
    rescale: bool = False
    out_format: str = "table"
    jitter: float | None = None

    def __post_init__(self):
        if self.r_min < 2:
            raise ValueError("r_min must be at least 2")
        if self.tie_tol < 0:
            raise ValueError("tie_tol must be non-negative")
        if self.out_format not in FORMATS:
            raise ValueError(f"unknown output format {self.out_format!r}")

    @classmethod
    def from_args(cls, args) -> RunConfig:
        return cls(
            kernels=tuple(args.kernel or DEFAULT_KERNELS),
            trend=args.trend,
            r_min=args.r_min,
            tie_tol=args.tie_tol,
            mode=args.mode,
            rescale=args.rescale,
            out_format=args.format,
            jitter=args.jitter,
        )


def working_grid(times, rescale: bool) -> KnotGrid:
    """Optionally map ``t`` to ``(t - t_1) / (t_last - t_1)``; results are reported in original units."""
    t = np.asarray(times, dtype=float)
    if rescale:
        t = (t - t[0]) / (t[-1] - t[0])
    return KnotGrid(t)


def _file_ref(name: str) -> str | None:
    return name[5:] if name.startswith("file:") else None


def _trend_for(kernel: str, cfg: RunConfig, grid: KnotGrid):
    """Trend matrix over ``grid`` for ``kernel`` (``None`` for no trend)."""
    mode = cfg.trend
    if mode is None:
        mode = "affine" if kernel in ("K1", "K2") else "none"
    if mode == "none":
        return None
    if mode == "affine":
        return grid.affine_trend()
    path = _file_ref(mode)
    if path is None:
        raise ValueError(f"unknown trend {mode!r}")
    P = read_matrix(path)
    if P.shape[0] != len(grid):
        raise StructureError(f"trend file {path} has {P.shape[0]} rows, grid has {len(grid)} points")
    return P


def _kernel_matrix(kernel: str, grid: KnotGrid, cache: dict) -> np.ndarray:
    path = _file_ref(kernel)
    if path is not None:
        K = read_matrix(path)
        if K.shape != (len(grid), len(grid)):
            raise StructureError(f"kernel file {path} is {K.shape[0]}x{K.shape[1]}, grid has {len(grid)} points")
        return K
    if kernel not in DEFAULT_KERNELS:
        raise ValueError(f"unknown kernel {kernel!r}")
    if "set" not in cache:
        cache["set"] = kernel_set(grid, check=False)
    return cache["set"].kernel(kernel)


def one_step(series: Series, next_time: float, kernel: str, cfg: RunConfig, cache=None):
    """Prediction of the value at ``next_time``; returns ``(PredictionResult | None, value, trend)``."""
    cache = {} if cache is None else cache
    times = np.append(series.times, next_time)
    grid = working_grid(times, cfg.rescale)
    if kernel == "P":
        return None, pspline_predict(grid, series.values), "natural-spline"
    K = _kernel_matrix(kernel, grid, cache)
    P = _trend_for(kernel, cfg, grid)
    if P is None:
        res = minmax_weights(K, series.values, jitter=cfg.jitter)
        return res, res.predicted, "none"
    res = constrained_weights(K, P, series.values, jitter=cfg.jitter)
    return res, res.predicted, cfg.trend or "affine"


# -- commands -----------------------------------------------------------------


def cmd_kernels(series: Series, cfg: RunConfig, next_time: float | None = None) -> str:
    times = series.times if next_time is None else np.append(series.times, next_time)
    if len(times) < 4:
        raise StructureError("spline kernels need at least 4 time points")
    grid = working_grid(times, cfg.rescale)
    ks = kernel_set(grid, check=False)
    T = grid.affine_trend()
    blocks = []
    for name, M in ks.matrices().items():
        if M.shape[0] != M.shape[1]:
            cls = "rectangular"
        elif name in ("P", "K1", "K2"):
            cls = str(validate_kernel(M, T))
        else:
            cls = str(validate_kernel(M))
        blocks.append((name, M, cls))
    expected = {"Q": Classification.POSITIVE_DEFINITE, "Q0": Classification.POSITIVE_DEFINITE,
                "K0": Classification.POSITIVE_DEFINITE, "K1": Classification.CONDITIONALLY_POSITIVE,
                "K2": Classification.CONDITIONALLY_POSITIVE}
    for name, _, cls in blocks:
        if name in expected and cls != str(expected[name]):
            print(f"warning: {name} classified {cls}, expected {expected[name]}", file=sys.stderr)
    return render_matrices(blocks, cfg.out_format)


def cmd_predict(
    series: Series,
    cfg: RunConfig,
    next_time: float | None = None,
    truth: float | None = None,
    chain: str = "none",
) -> str:
    if next_time is None:
        next_time = series.times[-1] + (series.times[-1] - series.times[-2])
    if next_time <= series.times[-1]:
        raise StructureError(f"next time {next_time} must exceed the last observed time {series.times[-1]}")
    if chain == "true" and truth is None:
        raise ValueError("--chain true needs the true next value (--truth or --holdout)")

    columns = ["kernel", "trend", "step", "time", "predicted", "worst_error",
               "truth", "realized_error", "error_formula", "note"]
    rows = []
    for kernel in cfg.kernels:
        try:
            res, value, trend = one_step(series, next_time, kernel, cfg)
        except MinmaxError as exc:
            raise type(exc)(f"{kernel}: {exc}") from exc
        realized = formula = None
        if truth is not None:
            realized = truth - value
            if res is not None and trend == "none":
                K = _kernel_matrix(kernel, working_grid(np.append(series.times, next_time), cfg.rescale), {})
                try:
                    formula = interpolation_error(K, np.append(series.values, truth))
                except FactorizationError:
                    formula = None
        note = "; ".join(res.diagnostics) if res is not None else ""
        rows.append([kernel, trend, 1, next_time, value, None if res is None else res.worst_error,
                     truth, realized, formula, note])
        if chain != "none":
            appended = value if chain == "predicted" else truth
            extended = Series(KnotGrid(np.append(series.times, next_time)), np.append(series.values, appended))
            t2 = next_time + (next_time - series.times[-1])
            res2, value2, _ = one_step(extended, t2, kernel, cfg)
            rows.append([kernel, trend, 2, t2, value2, None if res2 is None else res2.worst_error,
                         None, None, None, f"chained:{chain}"])
    return render_rows(columns, rows, cfg.out_format)


def cmd_evaluate(series: Series, cfg: RunConfig) -> str:
    if len(series) < cfg.r_min + 2:
        raise StructureError(f"evaluate needs at least r_min + 2 = {cfg.r_min + 2} observations")
    grid = working_grid(series.times, cfg.rescale)
    specs = []
    for kernel in cfg.kernels:
        path = _file_ref(kernel)
        trend = cfg.trend
        if trend is not None and _file_ref(trend):
            trend = _trend_for(kernel, cfg, grid)
        if path is not None:
            specs.append(KernelSpec("matrix", label=kernel, matrix=read_matrix(path), trend=trend or "none",
                                    jitter=cfg.jitter))
        else:
            specs.append(KernelSpec(kernel, trend=trend if kernel != "P" else None, jitter=cfg.jitter))
    rep = tournament(series.values, grid, specs, r_min=cfg.r_min, mode=cfg.mode, tie_tol=cfg.tie_tol)

    columns = ["record", "kernel", "opponent", "mspe", "maxpe", "count", "failures",
               "win_fraction", "wins", "losses", "ties", "better"]
    rows = []
    for lab in rep.labels:
        rows.append(["kernel", lab, None, rep.mspe[lab], rep.maxpe[lab], rep.counts[lab],
                     rep.failures[lab], None, None, None, None, None])
    for a in rep.labels:
        for b in rep.labels:
            if a == b:
                continue
            pc = rep.pairs[(a, b)]
            rows.append(["pair", a, b, None, None, pc.total, None, pc.fraction,
                         pc.wins, pc.losses, pc.ties, rep.better(a, b)])
    if cfg.out_format == "json":
        data = {
            "kernels": [dict(zip(columns[1:], r[1:])) for r in rows if r[0] == "kernel"],
            "pairs": [dict(zip(columns[1:], r[1:])) for r in rows if r[0] == "pair"],
            "r_min": cfg.r_min,
            "mode": cfg.mode,
        }
        return dumps_json(data)
    return render_rows(columns, rows, cfg.out_format)


def sample_times(times, per_interval: int) -> np.ndarray:
    """``per_interval`` equispaced samples on every interval plus the last knot."""
    t = np.asarray(times, dtype=float)
    if per_interval < 1:
        raise ValueError("samples per interval must be at least 1")
    frac = np.arange(per_interval) / per_interval
    inner = (t[:-1, None] + np.diff(t)[:, None] * frac[None, :]).ravel()
    # keep knots exact
    inner[::per_interval] = t[:-1]
    return np.append(inner, t[-1])


def cmd_splinefit(
    series: Series,
    cfg: RunConfig,
    samples_per_interval: int = 10,
    next_time: float | None = None,
    truth: float | None = None,
) -> str:
    if next_time is None:
        next_time = series.times[-1] + (series.times[-1] - series.times[-2])
    times = np.append(series.times, next_time)
    grid = KnotGrid(times)
    ts = sample_times(times, samples_per_interval)
    columns = ["time"]
    curves = []
    for kernel in cfg.kernels:
        _, value, _ = one_step(series, next_time, kernel, cfg)
        model = natural_interpolant(grid, np.append(series.values, value))
        columns.append(kernel)
        curves.append(evaluate(model, ts))
    if truth is not None:
        columns.append("truth")
        curves.append(evaluate(natural_interpolant(grid, np.append(series.values, truth)), ts))
    rows = [[t, *(c[i] for c in curves)] for i, t in enumerate(ts)]
    return render_rows(columns, rows, cfg.out_format)


def cmd_weights(series: Series, cfg: RunConfig, next_time: float | None = None) -> str:
    if next_time is None:
        next_time = series.times[-1] + (series.times[-1] - series.times[-2])
    columns = ["kernel", "index", "time", "weight"]
    rows = []
    for kernel in cfg.kernels:
        if kernel == "P":
            grid = working_grid(np.append(series.times, next_time), cfg.rescale)
            w = _pspline_weights(grid)
        else:
            res, _, _ = one_step(series, next_time, kernel, cfg)
            w = res.weights
        rows.extend([kernel, i + 1, t, wi] for i, (t, wi) in enumerate(zip(series.times, w)))
    return render_rows(columns, rows, cfg.out_format)


def _pspline_weights(grid: KnotGrid) -> np.ndarray:
    n = len(grid) - 1
    return np.array([pspline_predict(grid, np.eye(n)[i]) for i in range(n)])


# -- argument parsing ---------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("series", help="two-column time,value CSV file")
    p.add_argument("-k", "--kernel", action="append",
                   help="K0, K1, K2, P (natural spline) or file:PATH; repeatable (default K0 K1 K2)")
    p.add_argument("--trend", default=None,
                   help="none, affine or file:PATH (default: none for K0, affine for K1/K2)")
    p.add_argument("--r-min", type=int, default=2, help="first origin of the rolling sweep (default 2)")
    p.add_argument("--tie-tol", type=float, default=0.0, help="error difference counted as a tie")
    p.add_argument("--mode", choices=("submatrix", "rebuild"), default="submatrix",
                   help="kernel per rolling step: leading block of the full kernel, or rebuilt")
    p.add_argument("--rebuild-kernel", dest="mode", action="store_const", const="rebuild",
                   help="same as --mode rebuild")
    p.add_argument("--rescale", action="store_true", help="map times to [0, 1] internally")
    p.add_argument("--jitter", type=float, default=None, help="add JITTER * I to the observed block")
    p.add_argument("-f", "--format", choices=FORMATS, default="table")
    p.add_argument("-o", "--out", default=None, help="output file")


def _add_target(p: argparse.ArgumentParser) -> None:
    p.add_argument("--next-time", type=float, default=None,
                   help="time to predict (default: last time plus last gap)")
    p.add_argument("--truth", type=float, default=None, help="true value at the predicted time")
    p.add_argument("--holdout", action="store_true",
                   help="withhold the last row and use it as the target time and true value")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="minmaxpred", description="Min-max one-step prediction of time series with spline kernels."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("kernels", help="dump the spline matrices and kernels")
    _add_common(p)
    p.add_argument("--next-time", type=float, default=None, help="append this time to the grid")

    p = sub.add_parser("predict", help="one-step prediction per kernel")
    _add_common(p)
    _add_target(p)
    p.add_argument("--chain", choices=("none", "predicted", "true"), default="none",
                   help="also predict one further step after appending the predicted or true value")

    p = sub.add_parser("evaluate", help="rolling-origin selection criteria")
    _add_common(p)

    p = sub.add_parser("splinefit", help="spline samples through each prediction")
    _add_common(p)
    _add_target(p)
    p.add_argument("-s", "--samples", type=int, default=10, help="samples per interval")

    p = sub.add_parser("weights", help="optimal weights per kernel")
    _add_common(p)
    _add_target(p)
    return parser


def _target(series: Series, args):
    next_time, truth = getattr(args, "next_time", None), getattr(args, "truth", None)
    if getattr(args, "holdout", False):
        if len(series) < 3:
            raise StructureError("--holdout needs at least three rows")
        next_time, truth = float(series.times[-1]), float(series.values[-1])
        series = Series(series.grid.head(len(series) - 1), series.values[:-1])
    return series, next_time, truth


def run(args) -> str:
    cfg = RunConfig.from_args(args)
    series = read_series(args.series)
    if args.command == "kernels":
        return cmd_kernels(series, cfg, args.next_time)
    series, next_time, truth = _target(series, args)
    if args.command == "predict":
        return cmd_predict(series, cfg, next_time, truth, args.chain)
    if args.command == "evaluate":
        return cmd_evaluate(series, cfg)
    if args.command == "splinefit":
        return cmd_splinefit(series, cfg, args.samples, next_time, truth)
    return cmd_weights(series, cfg, next_time)


def _destination(args) -> str | None:
    if args.out:
        return args.out
    outdir = os.environ.get(OUTPUT_DIR_ENV)
    if outdir:
        return os.path.join(outdir, f"{args.command}.{_EXT[args.format]}")
    return None


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        text = run(args)
    except (ParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except FactorizationError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (StructureError, ConstraintError, InvariantError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    dest = _destination(args)
    if dest is None:
        sys.stdout.write(text)
    else:
        with open(dest, "w", encoding="utf-8") as fh:
            fh.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
