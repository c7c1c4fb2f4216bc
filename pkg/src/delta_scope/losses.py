"""Convex classification losses and the regularized empirical risk.

Both losses are functions of the margin z = y * score:

* logistic:       log(1 + exp(-z)), evaluated overflow-safely as
                  log1p(exp(-|z|)) + max(0, -z)
* squared hinge:  max(0, 1 - z)^2  (the "l2-hinge")

The regularized objective over a dataset is
mean_i loss(y_i, x_i . beta) + (lam / 2) * ||beta||^2.
"""
from __future__ import annotations

from enum import Enum

import numpy as np

from .data import SparseDataset

__all__ = [
    "LossKind",
    "loss_values",
    "dloss_values",
    "loss_value",
    "dloss_dscore",
    "instance_gradient",
    "objective",
    "objective_gradient",
    "value_and_gradient",
]


class LossKind(Enum):
    LOGISTIC = "logistic"
    L2_HINGE = "l2-hinge"

    @classmethod
    def from_name(cls, name: str) -> "LossKind":
        for kind in cls:
            if kind.value == name:
                return kind
        known = ", ".join(k.value for k in cls)
        raise ValueError(f"unknown loss {name!r} (expected one of: {known})")


def loss_values(kind: LossKind, y: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """Per-instance loss, vectorized over margins."""
    z = y * scores
    if kind is LossKind.LOGISTIC:
        return np.log1p(np.exp(-np.abs(z))) + np.maximum(-z, 0.0)
    if kind is LossKind.L2_HINGE:
        active = np.maximum(1.0 - z, 0.0)
        return active * active
    raise ValueError(f"unknown loss kind {kind!r}")


def dloss_values(kind: LossKind, y: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """Per-instance derivative of the loss with respect to the score."""
    z = y * scores
    if kind is LossKind.LOGISTIC:
        e = np.exp(-np.abs(z))
        sig = np.where(z >= 0, e / (1.0 + e), 1.0 / (1.0 + e))  # sigmoid(-z)
        return -y * sig
    if kind is LossKind.L2_HINGE:
        return -2.0 * y * np.maximum(1.0 - z, 0.0)
    raise ValueError(f"unknown loss kind {kind!r}")


def loss_value(kind: LossKind, y: float, score: float) -> float:
    return float(loss_values(kind, np.float64(y), np.float64(score)))


def dloss_dscore(kind: LossKind, y: float, score: float) -> float:
    return float(dloss_values(kind, np.float64(y), np.float64(score)))


def instance_gradient(kind: LossKind, x, y: float, beta: np.ndarray) -> np.ndarray:
    """Gradient of loss(y, x . beta) with respect to beta, as a dense vector.

    ``x`` may be a dense 1-d array or a 1-row sparse matrix.
    """
    if hasattr(x, "toarray"):
        score = float((x @ beta)[0])
        dl = dloss_dscore(kind, y, score)
        out = np.zeros(beta.shape[0])
        out[x.indices] = dl * x.data
        return out
    x = np.asarray(x, dtype=np.float64)
    return dloss_dscore(kind, y, float(x @ beta)) * x


def _check_problem(ds: SparseDataset, beta: np.ndarray, lam: float) -> np.ndarray:
    if ds.n < 1:
        raise ValueError("dataset is empty")
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (ds.d,):
        raise ValueError(f"beta has shape {beta.shape}, expected ({ds.d},)")
    return beta


def objective(ds: SparseDataset, beta: np.ndarray, lam: float, kind: LossKind) -> float:
    beta = _check_problem(ds, beta, lam)
    scores = ds.X @ beta
    return float(loss_values(kind, ds.y, scores).mean() + 0.5 * lam * (beta @ beta))


def objective_gradient(
    ds: SparseDataset, beta: np.ndarray, lam: float, kind: LossKind
) -> np.ndarray:
    beta = _check_problem(ds, beta, lam)
    scores = ds.X @ beta
    dl = dloss_values(kind, ds.y, scores)
    return ds.X.T @ (dl / ds.n) + lam * beta


def value_and_gradient(
    ds: SparseDataset, beta: np.ndarray, lam: float, kind: LossKind
) -> tuple[float, np.ndarray]:
    """Objective and gradient in one pass (shares the score matvec)."""
    beta = _check_problem(ds, beta, lam)
    scores = ds.X @ beta
    value = float(loss_values(kind, ds.y, scores).mean() + 0.5 * lam * (beta @ beta))
    dl = dloss_values(kind, ds.y, scores)
    grad = ds.X.T @ (dl / ds.n) + lam * beta
    return value, grad
