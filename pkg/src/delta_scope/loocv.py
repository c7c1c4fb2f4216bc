"""Accelerated leave-one-out cross-validation for regularized linear models.

Training the full model once and treating each fold as a one-instance
removal lets every held-out score y_h * (x_h . beta_fold) be sandwiched in
O(nnz(x_h)) time, without solving the fold problem. Folds whose interval
excludes 0 are decided outright; only the undecided remainder is solved.

Modes:

* ``exact`` — solve every fold (ground truth, no screening);
* ``op1``  — screen, then solve undecided folds to tolerance;
* ``op2``  — screen, then solve undecided folds but stop each solve as soon
  as the iterate's own gradient-ball interval for the held-out score
  excludes 0.

The optional ordering trick processes undecided folds by increasing held-out
margin under the full model (cheapest sign decisions first); it never changes
any outcome, only speed. Model selection over a grid can prune a candidate
as soon as its running error lower bound exceeds the best completed error.
"""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .bounds import BoundMethod, ScoreBounds
from .data import SparseDataset
from .losses import LossKind, dloss_values, loss_values
from .solver import (
    DEFAULT_TRAIN_TOL,
    MAX_ITER,
    TrainedModel,
    minimize_smooth,
    train,
)

__all__ = [
    "LoocvMode",
    "FoldDecision",
    "FoldOutcome",
    "LoocvResult",
    "GridPoint",
    "GridCellResult",
    "ModelSelectResult",
    "RbfFeatureMap",
    "loocv_fold_bounds",
    "run_loocv",
    "model_select",
    "rbf_feature_map",
    "THREADS_ENV_VAR",
]

THREADS_ENV_VAR = "DELTA_SCOPE_THREADS"
DEFAULT_FOLD_TOL = 1e-6


class LoocvMode(Enum):
    EXACT = "exact"
    OP1 = "op1"
    OP2 = "op2"

    @classmethod
    def from_name(cls, name: str) -> "LoocvMode":
        for mode in cls:
            if mode.value == name:
                return mode
        raise ValueError(f"unknown mode {name!r} (expected exact, op1 or op2)")


class FoldDecision(Enum):
    CORRECT_BY_BOUND = "correct-by-bound"
    WRONG_BY_BOUND = "wrong-by-bound"
    RESOLVED_BY_SOLVE = "resolved-by-solve"
    RESOLVED_BY_EARLY_STOP = "resolved-by-early-stop"


@dataclass(frozen=True)
class FoldOutcome:
    index: int
    decision: FoldDecision
    correct: bool
    bounds: ScoreBounds | None
    solve_iterations: int = 0


@dataclass(frozen=True, eq=False)
class LoocvResult:
    """Outcome of one leave-one-out evaluation.

    ``error_lower``/``error_upper`` are the engine's final knowledge about
    the true error rate: they coincide with ``error_rate`` once every fold
    is resolved and stay a genuine interval when the run was pruned.
    """

    n: int
    mode: LoocvMode
    error_rate: float
    error_lower: float
    error_upper: float
    outcomes: tuple[FoldOutcome, ...]
    solves_performed: int
    solver_iterations: int
    bound_time: float
    solve_time: float
    wall_time: float
    pruned: bool = False


def _resolve_threads(threads: int | None) -> int:
    if threads is None:
        raw = os.environ.get(THREADS_ENV_VAR, "1")
        try:
            threads = int(raw)
        except ValueError:
            raise ValueError(f"{THREADS_ENV_VAR} must be an integer, got {raw!r}")
    if threads < 1:
        raise ValueError("thread count must be at least 1")
    return threads


def _screen_stats(full: TrainedModel, ds: SparseDataset):
    """Vectorized held-out-score intervals for all folds in one pass."""
    n = ds.n
    beta = full.beta
    scores = ds.X @ beta
    row_sq = ds.row_sq_norms()
    dl = dloss_values(full.kind, ds.y, scores)
    c = dl / full.lam
    denom = 2.0 * (n - 1.0)
    beta_sq = float(beta @ beta)
    center = ds.y * ((2.0 * n - 1.0) * scores + c * row_sq) / denom
    rad_sq = np.maximum(beta_sq + 2.0 * c * scores + c * c * row_sq, 0.0)
    radius = np.sqrt(rad_sq) / denom
    eta_norm = np.sqrt(row_sq)
    spread = eta_norm * radius
    return center - spread, center + spread, eta_norm, scores


def loocv_fold_bounds(full: TrainedModel, ds: SparseDataset, h: int) -> ScoreBounds:
    """Certified interval for the held-out score of fold ``h``.

    Equal (to rounding) to summarizing the one-instance removal and bounding
    eta = y_h * x_h over the resulting old-optimum ball, but computed from
    x_h . beta, ||x_h||^2 and ||beta||^2 alone.
    """
    if ds.n < 2:
        raise ValueError("leave-one-out needs at least 2 instances")
    if not 0 <= h < ds.n:
        raise ValueError(f"fold index {h} out of range for n={ds.n}")
    if full.d != ds.d or full.n_train != ds.n:
        raise ValueError("model was not trained on this dataset")
    idx, vals = ds.row(h)
    score = float(vals @ full.beta[idx])
    x_sq = float(vals @ vals)
    y_h = float(ds.y[h])
    dl = dloss_values(full.kind, np.float64(y_h), np.float64(score))
    c = float(dl) / full.lam
    n = ds.n
    denom = 2.0 * (n - 1.0)
    beta_sq = float(full.beta @ full.beta)
    center = y_h * ((2.0 * n - 1.0) * score + c * x_sq) / denom
    radius = math.sqrt(max(beta_sq + 2.0 * c * score + c * c * x_sq, 0.0)) / denom
    eta_norm = math.sqrt(x_sq)
    return ScoreBounds(
        lower=center - eta_norm * radius,
        upper=center + eta_norm * radius,
        eta_norm=eta_norm,
        method=BoundMethod.OLD_OPTIMUM_BALL,
    )


def _fold_problem(ds: SparseDataset, h: int, lam: float, kind: LossKind):
    """Objective/gradient of the leave-one-out problem without copying rows."""
    X, y, n = ds.X, ds.y, ds.n

    def vag(beta: np.ndarray) -> tuple[float, np.ndarray]:
        scores = X @ beta
        losses = loss_values(kind, y, scores)
        dl = dloss_values(kind, y, scores)
        dl[h] = 0.0
        value = (losses.sum() - losses[h]) / (n - 1) + 0.5 * lam * (beta @ beta)
        grad = (X.T @ dl) / (n - 1) + lam * beta
        return float(value), grad

    def val(beta: np.ndarray) -> float:
        scores = X @ beta
        losses = loss_values(kind, y, scores)
        return float((losses.sum() - losses[h]) / (n - 1) + 0.5 * lam * (beta @ beta))

    return vag, val


def _solve_fold(
    ds: SparseDataset,
    h: int,
    full: TrainedModel,
    *,
    tol: float,
    max_iter: int,
    early_stop: bool,
    eta_norm_h: float,
    screened: ScoreBounds | None,
) -> FoldOutcome:
    """Resolve one undecided fold by (possibly early-stopped) warm solve."""
    idx, vals = ds.row(h)
    y_h = float(ds.y[h])
    vag, val = _fold_problem(ds, h, full.lam, full.kind)
    verdict: list[bool] = []

    hook = None
    if early_stop:
        half_inv = 0.5 / full.lam

        def hook(beta: np.ndarray, grad: np.ndarray) -> bool:
            eta_c = y_h * float(vals @ beta[idx])
            eta_g = y_h * float(vals @ grad[idx])
            spread = half_inv * eta_norm_h * float(np.linalg.norm(grad))
            lower = eta_c - half_inv * eta_g - spread
            if lower > 0.0:
                verdict.append(True)
                return True
            upper = eta_c - half_inv * eta_g + spread
            if upper < 0.0:
                verdict.append(False)
                return True
            return False

    beta, _, iters, stopped_early, _ = minimize_smooth(
        vag, val, full.beta, tol=tol, max_iter=max_iter, stop_hook=hook
    )
    if stopped_early:
        correct = verdict[0]
        decision = FoldDecision.RESOLVED_BY_EARLY_STOP
    else:
        correct = y_h * float(vals @ beta[idx]) >= 0.0
        decision = FoldDecision.RESOLVED_BY_SOLVE
    return FoldOutcome(h, decision, correct, screened, iters)


def run_loocv(
    ds: SparseDataset,
    lam: float,
    kind: LossKind,
    *,
    mode: LoocvMode = LoocvMode.OP1,
    order_trick: bool = False,
    fold_tol: float = DEFAULT_FOLD_TOL,
    full_tol: float = DEFAULT_TRAIN_TOL,
    full: TrainedModel | None = None,
    max_iter: int = MAX_ITER,
    threads: int | None = None,
    prune_above: float | None = None,
) -> LoocvResult:
    """Leave-one-out error of the (lam, kind) model family on ``ds``.

    A fitted full model may be passed to skip the initial training. Fold
    solves are warm-started from the full optimum; ``threads`` (default: the
    DELTA_SCOPE_THREADS environment variable, then 1) parallelizes them.
    With ``prune_above`` set, the run is abandoned as soon as the running
    error lower bound exceeds it, returning a partial, ``pruned`` result.
    """
    t_start = time.perf_counter()
    if ds.n < 2:
        raise ValueError("leave-one-out needs at least 2 instances")
    workers = _resolve_threads(threads)
    if full is None:
        full, _ = train(ds, lam, kind, tol=full_tol, max_iter=max_iter)
    elif full.d != ds.d or full.n_train != ds.n:
        raise ValueError("supplied model was not trained on this dataset")
    elif full.lam != lam or full.kind != kind:
        raise ValueError("supplied model disagrees with lam/kind arguments")

    n = ds.n
    outcomes: dict[int, FoldOutcome] = {}
    known_wrong = 0
    pruned = False

    bound_time = 0.0
    eta_norms = None
    scores = None
    screened: dict[int, ScoreBounds] = {}
    if mode is LoocvMode.EXACT:
        unresolved = list(range(n))
        if order_trick:
            scores = ds.X @ full.beta
    else:
        t0 = time.perf_counter()
        lower, upper, eta_norms, scores = _screen_stats(full, ds)
        bound_time = time.perf_counter() - t0
        unresolved = []
        for h in range(n):
            sb = ScoreBounds(
                float(lower[h]), float(upper[h]), float(eta_norms[h]),
                BoundMethod.OLD_OPTIMUM_BALL,
            )
            if sb.lower > 0.0:
                outcomes[h] = FoldOutcome(h, FoldDecision.CORRECT_BY_BOUND, True, sb)
            elif sb.upper < 0.0:
                outcomes[h] = FoldOutcome(h, FoldDecision.WRONG_BY_BOUND, False, sb)
                known_wrong += 1
            else:
                unresolved.append(h)
                screened[h] = sb

    unresolved_left = 0
    if prune_above is not None and unresolved and known_wrong / n > prune_above:
        pruned = True
        unresolved_left = len(unresolved)
        unresolved = []

    if order_trick and unresolved:
        margins = ds.y * scores
        unresolved.sort(key=lambda h: (margins[h], h))

    if eta_norms is None and unresolved:
        eta_norms = np.sqrt(ds.row_sq_norms())

    def solve(h: int) -> FoldOutcome:
        return _solve_fold(
            ds,
            h,
            full,
            tol=fold_tol,
            max_iter=max_iter,
            early_stop=mode is LoocvMode.OP2,
            eta_norm_h=float(eta_norms[h]),
            screened=screened.get(h),
        )

    t0 = time.perf_counter()
    pos = 0
    while pos < len(unresolved):
        chunk = unresolved[pos : pos + workers]
        pos += len(chunk)
        if workers > 1 and len(chunk) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(solve, chunk))
        else:
            results = [solve(h) for h in chunk]
        abandon = False
        for out in results:
            outcomes[out.index] = out
            if not out.correct:
                known_wrong += 1
            if prune_above is not None and known_wrong / n > prune_above:
                abandon = True
        if abandon and pos < len(unresolved):
            pruned = True
            unresolved_left = len(unresolved) - pos
            break
    solve_time = time.perf_counter() - t0

    ordered = tuple(outcomes[h] for h in sorted(outcomes))
    solves = sum(
        1
        for o in ordered
        if o.decision in (FoldDecision.RESOLVED_BY_SOLVE, FoldDecision.RESOLVED_BY_EARLY_STOP)
    )
    error_lower = known_wrong / n
    error_upper = (known_wrong + unresolved_left) / n
    return LoocvResult(
        n=n,
        mode=mode,
        error_rate=error_lower,
        error_lower=error_lower,
        error_upper=error_upper,
        outcomes=ordered,
        solves_performed=solves,
        solver_iterations=sum(o.solve_iterations for o in ordered),
        bound_time=bound_time,
        solve_time=solve_time,
        wall_time=time.perf_counter() - t_start,
        pruned=pruned,
    )


@dataclass(frozen=True, eq=False)
class GridPoint:
    """One model-selection candidate: an L2 weight and an optional feature map."""

    lam: float
    transform: Callable[[SparseDataset], SparseDataset] | None = None
    label: str = ""

    def describe(self) -> str:
        return self.label or f"lambda={self.lam:g}"


@dataclass(frozen=True, eq=False)
class GridCellResult:
    point: GridPoint
    result: LoocvResult


@dataclass(frozen=True, eq=False)
class ModelSelectResult:
    best_index: int
    cells: tuple[GridCellResult, ...]

    @property
    def best(self) -> GridCellResult:
        return self.cells[self.best_index]


def model_select(
    ds: SparseDataset,
    grid: Sequence[GridPoint],
    kind: LossKind,
    *,
    mode: LoocvMode = LoocvMode.OP1,
    prune: bool = False,
    order_trick: bool = False,
    fold_tol: float = DEFAULT_FOLD_TOL,
    full_tol: float = DEFAULT_TRAIN_TOL,
    max_iter: int = MAX_ITER,
    threads: int | None = None,
) -> ModelSelectResult:
    """Pick the grid cell with the lowest leave-one-out error.

    With ``prune`` enabled, a cell is abandoned once its running error lower
    bound exceeds the best completed cell's error; abandoned cells keep their
    partial results and are never selected. Ties go to the earliest cell.
    """
    if not grid:
        raise ValueError("empty model-selection grid")
    cells: list[GridCellResult] = []
    incumbent = math.inf
    cache: dict[int, SparseDataset] = {}
    for point in grid:
        if point.transform is None:
            work = ds
        else:
            key = id(point.transform)
            if key not in cache:
                cache[key] = point.transform(ds)
            work = cache[key]
        result = run_loocv(
            work,
            point.lam,
            kind,
            mode=mode,
            order_trick=order_trick,
            fold_tol=fold_tol,
            full_tol=full_tol,
            max_iter=max_iter,
            threads=threads,
            prune_above=incumbent if prune else None,
        )
        cells.append(GridCellResult(point, result))
        if not result.pruned:
            incumbent = min(incumbent, result.error_rate)
    best_index = -1
    best_rate = math.inf
    for i, cell in enumerate(cells):
        if not cell.result.pruned and cell.result.error_rate < best_rate:
            best_index = i
            best_rate = cell.result.error_rate
    return ModelSelectResult(best_index=best_index, cells=tuple(cells))


@dataclass(frozen=True, eq=False)
class RbfFeatureMap:
    """Gaussian feature map x -> exp(-gamma * ||x - c_k||^2) over fixed centers."""

    centers: np.ndarray
    gamma: float

    def __call__(self, ds: SparseDataset) -> SparseDataset:
        if ds.d != self.centers.shape[1]:
            raise ValueError("dataset dimension does not match the centers")
        sq = ds.row_sq_norms()
        c_sq = (self.centers**2).sum(axis=1)
        cross = np.asarray(ds.X @ self.centers.T)
        d2 = np.maximum(sq[:, None] - 2.0 * cross + c_sq[None, :], 0.0)
        return SparseDataset(sp.csr_matrix(np.exp(-self.gamma * d2)), ds.y)


def rbf_feature_map(
    train_ds: SparseDataset, gamma: float, *, n_centers: int = 100, seed: int = 0
) -> RbfFeatureMap:
    """Sample ``n_centers`` training rows (seeded) as Gaussian centers."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    rng = np.random.default_rng(seed)
    k = min(n_centers, train_ds.n)
    idx = np.sort(rng.choice(train_ds.n, size=k, replace=False))
    centers = np.asarray(train_ds.X[idx].todense())
    return RbfFeatureMap(centers, gamma)
