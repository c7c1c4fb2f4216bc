"""Certified sensitivity bounds for small training-set updates.

Given a model trained on n_old instances and an update adding n_A and
removing n_R instances, the re-trained optimum beta_new is never computed
here. Instead it is localized inside a closed ball derived in O((n_A+n_R)*d)
time, and every linear score eta . beta_new is then sandwiched as

    eta . center - ||eta|| * radius  <=  eta . beta_new
                                     <=  eta . center + ||eta|| * radius.

Two ball constructions are available:

* the old-optimum ball, built from the old optimum and the gradient summary
  of the changed instances (``compute_delta_s`` -> ``old_optimum_ball``);
* the gradient ball, built from any candidate iterate of the *new* problem
  and its objective gradient (``gradient_ball``), which shrinks to a point
  as the candidate converges.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .data import SparseDataset
from .losses import dloss_values
from .solver import TrainedModel

__all__ = [
    "BallSource",
    "BoundMethod",
    "Label",
    "SolutionBall",
    "UpdateStats",
    "ScoreBounds",
    "CoefficientBounds",
    "LabelDecision",
    "StaleOptimumWarning",
    "RESIDUAL_GUARD",
    "compute_delta_s",
    "old_optimum_ball",
    "gradient_ball",
    "score_bounds",
    "coefficient_bounds",
    "norm_change_bound",
    "naive_score_bounds",
    "classify_with_bounds",
    "batch_score_bounds",
]

RESIDUAL_GUARD = 1e-6


class StaleOptimumWarning(UserWarning):
    """The old model's gradient residual is too large for tight guarantees."""


class BallSource(Enum):
    OLD_OPTIMUM = "old-optimum"
    GRADIENT_ITERATE = "gradient-iterate"


class BoundMethod(Enum):
    OLD_OPTIMUM_BALL = "old-optimum-ball"
    GRADIENT_BALL = "gradient-ball"
    NAIVE_BOX = "naive-box"


class Label(Enum):
    PLUS = 1
    MINUS = -1
    UNKNOWN = 0


@dataclass(frozen=True, eq=False)
class SolutionBall:
    """Closed Euclidean ball certified to contain the re-trained optimum."""

    center: np.ndarray
    radius: float
    source: BallSource

    def __post_init__(self) -> None:
        center = np.asarray(self.center, dtype=np.float64)
        object.__setattr__(self, "center", center)
        center.flags.writeable = False
        if not (self.radius >= 0.0):
            raise ValueError(f"radius must be nonnegative, got {self.radius}")


@dataclass(frozen=True, eq=False)
class UpdateStats:
    """Sizes of an update plus the mean-gradient summary of its instances.

    ``delta_s`` is (sum of added-instance loss gradients minus sum of
    removed-instance loss gradients at the old optimum) / (n_added +
    n_removed); it is the zero vector for an empty update.
    """

    n_old: int
    n_new: int
    n_added: int
    n_removed: int
    delta_s: np.ndarray

    def __post_init__(self) -> None:
        ds_arr = np.asarray(self.delta_s, dtype=np.float64)
        object.__setattr__(self, "delta_s", ds_arr)
        ds_arr.flags.writeable = False
        if self.n_new != self.n_old + self.n_added - self.n_removed:
            raise ValueError("n_new must equal n_old + n_added - n_removed")


@dataclass(frozen=True)
class ScoreBounds:
    """Certified interval for one linear score eta . beta_new."""

    lower: float
    upper: float
    eta_norm: float
    method: BoundMethod

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True, eq=False)
class CoefficientBounds:
    """Per-coefficient intervals; every interval has the same width 2*radius."""

    lower: np.ndarray
    upper: np.ndarray
    radius: float

    @property
    def width(self) -> float:
        return 2.0 * self.radius


@dataclass(frozen=True)
class LabelDecision:
    label: Label
    bounds: ScoreBounds


def _eta_parts(eta, center: np.ndarray) -> tuple[float, float]:
    """(eta . center, ||eta||_2) for a dense vector or 1-row sparse eta."""
    if sp.issparse(eta):
        if eta.shape[0] != 1:
            raise ValueError("sparse eta must be a single row")
        if eta.shape[1] != center.shape[0]:
            raise ValueError(
                f"eta has dimension {eta.shape[1]}, ball has {center.shape[0]}"
            )
        csr = eta.tocsr()
        dot = float(csr.data @ center[csr.indices])
        return dot, float(np.linalg.norm(csr.data))
    eta = np.asarray(eta, dtype=np.float64)
    if eta.shape != center.shape:
        raise ValueError(f"eta has shape {eta.shape}, ball center {center.shape}")
    return float(eta @ center), float(np.linalg.norm(eta))


def compute_delta_s(
    old: TrainedModel,
    added: SparseDataset | None,
    removed: SparseDataset | None,
) -> UpdateStats:
    """Summarize an update by the mean gradient of its changed instances.

    Cost is O((n_added + n_removed) * d): only the changed instances are
    touched. Warns with :class:`StaleOptimumWarning` when the old model's
    stored gradient residual exceeds ``RESIDUAL_GUARD`` — downstream balls
    are only exact at a true optimum, and their error grows like
    residual / lambda.
    """
    n_a = added.n if added is not None else 0
    n_r = removed.n if removed is not None else 0
    if old.grad_residual > RESIDUAL_GUARD:
        warnings.warn(
            f"old model gradient residual {old.grad_residual:.3e} exceeds "
            f"{RESIDUAL_GUARD:.0e}; sensitivity bounds may be off by about "
            f"residual/lambda = {old.grad_residual / old.lam:.3e}",
            StaleOptimumWarning,
            stacklevel=2,
        )
    total = np.zeros(old.d)
    for part, sign in ((added, 1.0), (removed, -1.0)):
        if part is None or part.n == 0:
            continue
        if part.d != old.d:
            raise ValueError(f"instance dimension {part.d} != model dimension {old.d}")
        scores = part.X @ old.beta
        dl = dloss_values(old.kind, part.y, scores)
        total += sign * (part.X.T @ dl)
    delta_s = total / (n_a + n_r) if (n_a + n_r) > 0 else total
    return UpdateStats(
        n_old=old.n_train,
        n_new=old.n_train + n_a - n_r,
        n_added=n_a,
        n_removed=n_r,
        delta_s=delta_s,
    )


def old_optimum_ball(old: TrainedModel, stats: UpdateStats) -> SolutionBall:
    """Ball around a weighted old optimum, from the update summary alone.

    center = ((n_old + n_new) / (2 n_new)) * beta_old
             - (1/lambda) ((n_added + n_removed) / (2 n_new)) * delta_s
    radius = (1/2) || ((n_added - n_removed) / n_new) * beta_old
                      + (1/lambda) ((n_added + n_removed) / n_new) * delta_s ||
    """
    if stats.n_new <= 0:
        raise ValueError(f"update empties the training set (n_new={stats.n_new})")
    if stats.delta_s.shape != old.beta.shape:
        raise ValueError("delta_s dimension does not match the model")
    n_old, n_new = stats.n_old, stats.n_new
    k = stats.n_added + stats.n_removed
    inv_lam = 1.0 / old.lam
    center = ((n_old + n_new) / (2.0 * n_new)) * old.beta - (
        inv_lam * k / (2.0 * n_new)
    ) * stats.delta_s
    drift = ((stats.n_added - stats.n_removed) / n_new) * old.beta + (
        inv_lam * k / n_new
    ) * stats.delta_s
    radius = 0.5 * float(np.linalg.norm(drift))
    return SolutionBall(center, radius, BallSource.OLD_OPTIMUM)


def gradient_ball(candidate: np.ndarray, grad: np.ndarray, lam: float) -> SolutionBall:
    """Ball around any iterate of the *new* problem, from its gradient.

    center = candidate - grad / (2 lambda); radius = ||grad|| / (2 lambda).
    Valid at every iterate, so it doubles as a convergence certificate: the
    radius shrinks to 0 as the candidate approaches the new optimum.
    """
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    candidate = np.asarray(candidate, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if candidate.shape != grad.shape:
        raise ValueError("candidate and gradient shapes differ")
    half_inv = 0.5 / lam
    center = candidate - half_inv * grad
    radius = half_inv * float(np.linalg.norm(grad))
    return SolutionBall(center, radius, BallSource.GRADIENT_ITERATE)


_METHOD_FOR_SOURCE = {
    BallSource.OLD_OPTIMUM: BoundMethod.OLD_OPTIMUM_BALL,
    BallSource.GRADIENT_ITERATE: BoundMethod.GRADIENT_BALL,
}


def score_bounds(ball: SolutionBall, eta) -> ScoreBounds:
    """Sharp interval for eta . beta_new over the ball.

    The interval has width exactly 2 * ||eta|| * radius, attained because the
    extremizers eta . (center +/- radius * eta/||eta||) lie in the ball.
    """
    dot, eta_norm = _eta_parts(eta, ball.center)
    spread = eta_norm * ball.radius
    return ScoreBounds(
        lower=dot - spread,
        upper=dot + spread,
        eta_norm=eta_norm,
        method=_METHOD_FOR_SOURCE[ball.source],
    )


def coefficient_bounds(ball: SolutionBall) -> CoefficientBounds:
    """Intervals for every coefficient of beta_new (unit-vector scores)."""
    return CoefficientBounds(
        lower=ball.center - ball.radius,
        upper=ball.center + ball.radius,
        radius=ball.radius,
    )


def norm_change_bound(
    beta_old: np.ndarray, box: CoefficientBounds, q: float
) -> float:
    """Upper bound on ||beta_new - beta_old||_q from coefficient intervals.

    Uses the per-coordinate worst case max(beta_old_j - L_j, U_j - beta_old_j);
    q may be any value >= 1, including math.inf for the max norm.
    """
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    beta_old = np.asarray(beta_old, dtype=np.float64)
    if beta_old.shape != box.lower.shape:
        raise ValueError("beta_old dimension does not match the bounds")
    dev = np.maximum(beta_old - box.lower, box.upper - beta_old)
    if math.isinf(q):
        return float(dev.max()) if dev.size else 0.0
    return float((dev**q).sum() ** (1.0 / q))


def naive_score_bounds(box: CoefficientBounds, eta) -> ScoreBounds:
    """Interval for eta . beta_new using only the coefficient box.

    Sums the per-coordinate worst cases, so its width is
    2 * radius * ||eta||_1 — never tighter than the ball interval's
    2 * radius * ||eta||_2. Kept for comparison.
    """
    if sp.issparse(eta):
        csr = eta.tocsr()
        if csr.shape[0] != 1 or csr.shape[1] != box.lower.shape[0]:
            raise ValueError("eta shape does not match the bounds")
        vals = csr.data
        lo_box = box.lower[csr.indices]
        hi_box = box.upper[csr.indices]
        eta_norm = float(np.linalg.norm(vals))
    else:
        vals = np.asarray(eta, dtype=np.float64)
        if vals.shape != box.lower.shape:
            raise ValueError("eta shape does not match the bounds")
        lo_box, hi_box = box.lower, box.upper
        eta_norm = float(np.linalg.norm(vals))
    lower = float(np.where(vals >= 0, vals * lo_box, vals * hi_box).sum())
    upper = float(np.where(vals >= 0, vals * hi_box, vals * lo_box).sum())
    return ScoreBounds(lower, upper, eta_norm, BoundMethod.NAIVE_BOX)


def batch_score_bounds(ball: SolutionBall, X: sp.spmatrix) -> tuple[np.ndarray, np.ndarray]:
    """Score intervals for every row of a sparse matrix at once.

    Vectorized equivalent of calling :func:`score_bounds` with each row as
    eta; returns (lower, upper) arrays.
    """
    X = X.tocsr()
    if X.shape[1] != ball.center.shape[0]:
        raise ValueError(
            f"rows have dimension {X.shape[1]}, ball has {ball.center.shape[0]}"
        )
    dots = X @ ball.center
    csum = np.concatenate([[0.0], np.cumsum(X.data**2)])
    norms = np.sqrt(csum[X.indptr[1:]] - csum[X.indptr[:-1]])
    spread = norms * ball.radius
    return dots - spread, dots + spread


def classify_with_bounds(ball: SolutionBall, x) -> LabelDecision:
    """Predicted label of x under beta_new, when the ball already decides it.

    Strict rule: PLUS when the certified lower bound is > 0, MINUS when the
    upper bound is < 0, UNKNOWN otherwise (a bound exactly 0 stays UNKNOWN).
    """
    sb = score_bounds(ball, x)
    if sb.lower > 0.0:
        return LabelDecision(Label.PLUS, sb)
    if sb.upper < 0.0:
        return LabelDecision(Label.MINUS, sb)
    return LabelDecision(Label.UNKNOWN, sb)
