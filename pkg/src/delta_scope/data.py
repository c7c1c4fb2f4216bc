"""Sparse datasets for binary linear classification.

Instances live in a CSR matrix with strictly sorted column indices per row;
labels are +1/-1 (any nonpositive input label maps to -1 at ingestion).
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = [
    "LibsvmFormatError",
    "SparseDataset",
    "UpdatePlan",
    "parse_libsvm",
    "load_libsvm",
    "serialize_libsvm",
    "save_libsvm",
    "with_bias_feature",
    "apply_update",
    "make_synthetic",
]


class LibsvmFormatError(ValueError):
    """A libsvm text payload could not be parsed."""


def _freeze(arr: np.ndarray) -> None:
    arr.flags.writeable = False


@dataclass(frozen=True, eq=False)
class SparseDataset:
    """Immutable labeled sparse dataset (rows x features)."""

    X: sp.csr_matrix
    y: np.ndarray

    def __post_init__(self) -> None:
        X = self.X
        if not sp.issparse(X):
            raise ValueError("X must be a scipy sparse matrix")
        if X.format != "csr":
            object.__setattr__(self, "X", X.tocsr())
            X = self.X
        X.sum_duplicates()
        if not X.has_sorted_indices:
            X.sort_indices()
        y = np.asarray(self.y, dtype=np.float64)
        object.__setattr__(self, "y", y)
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ValueError(
                f"label vector has shape {y.shape}, expected ({X.shape[0]},)"
            )
        if y.size and not np.all((y == 1.0) | (y == -1.0)):
            raise ValueError("labels must be +1 or -1")
        if not np.all(np.isfinite(X.data)):
            raise ValueError("feature values must be finite")
        for arr in (X.data, X.indices, X.indptr, y):
            _freeze(arr)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Column indices and values of row ``i`` (views, do not mutate)."""
        lo, hi = self.X.indptr[i], self.X.indptr[i + 1]
        return self.X.indices[lo:hi], self.X.data[lo:hi]

    def take(self, indices) -> "SparseDataset":
        """Subset of rows, in the given order."""
        idx = np.asarray(indices, dtype=np.intp)
        return SparseDataset(self.X[idx], self.y[idx])

    def row_sq_norms(self) -> np.ndarray:
        """Per-row squared Euclidean norms."""
        csum = np.concatenate([[0.0], np.cumsum(self.X.data**2)])
        return csum[self.X.indptr[1:]] - csum[self.X.indptr[:-1]]

    @classmethod
    def empty(cls, d: int) -> "SparseDataset":
        return cls(sp.csr_matrix((0, d)), np.zeros(0))


@dataclass(frozen=True, eq=False)
class UpdatePlan:
    """A batch update: instances to append and 0-based row indices to drop."""

    added: SparseDataset
    removed: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        removed = tuple(int(i) for i in self.removed)
        if len(set(removed)) != len(removed):
            raise ValueError("duplicate removal index")
        if any(i < 0 for i in removed):
            raise ValueError("removal indices must be nonnegative")
        object.__setattr__(self, "removed", tuple(sorted(removed)))

    @property
    def n_added(self) -> int:
        return self.added.n

    @property
    def n_removed(self) -> int:
        return len(self.removed)

    @classmethod
    def empty(cls, d: int) -> "UpdatePlan":
        return cls(SparseDataset.empty(d), ())


def parse_libsvm(text: str | bytes, *, d: int | None = None) -> SparseDataset:
    """Parse libsvm-format text: ``<label> <index>:<value> ...`` per line.

    Indices are 1-based and must be strictly ascending within a line. Labels
    are read as numbers; positive becomes +1, anything else -1. The feature
    dimension is the largest index seen unless ``d`` pins it. Raises
    :class:`LibsvmFormatError` (with a line number) on malformed input.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    labels: list[float] = []
    data: list[float] = []
    indices: list[int] = []
    indptr: list[int] = [0]
    max_index = 0
    for ln, line in enumerate(text.splitlines(), 1):
        tokens = line.split()
        if not tokens:
            continue
        try:
            raw_label = float(tokens[0])
        except ValueError:
            raise LibsvmFormatError(f"line {ln}: bad label {tokens[0]!r}") from None
        labels.append(1.0 if raw_label > 0 else -1.0)
        prev = 0
        for tok in tokens[1:]:
            idx_s, _, val_s = tok.partition(":")
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise LibsvmFormatError(f"line {ln}: bad pair {tok!r}") from None
            if idx <= 0:
                raise LibsvmFormatError(f"line {ln}: index {idx} is not positive")
            if idx <= prev:
                raise LibsvmFormatError(
                    f"line {ln}: index {idx} not strictly ascending"
                )
            if not math.isfinite(val):
                raise LibsvmFormatError(f"line {ln}: non-finite value {val_s!r}")
            indices.append(idx - 1)
            data.append(val)
            prev = idx
        max_index = max(max_index, prev)
        indptr.append(len(data))
    if not labels:
        raise LibsvmFormatError("no instances found")
    if d is None:
        d = max_index
    elif max_index > d:
        raise LibsvmFormatError(
            f"feature index {max_index} exceeds pinned dimension {d}"
        )
    X = sp.csr_matrix(
        (np.array(data), np.array(indices, dtype=np.int32), np.array(indptr, dtype=np.int32)),
        shape=(len(labels), d),
    )
    return SparseDataset(X, np.array(labels))


def load_libsvm(path: str | os.PathLike, *, d: int | None = None) -> SparseDataset:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_libsvm(fh.read(), d=d)


def serialize_libsvm(ds: SparseDataset) -> str:
    """Inverse of :func:`parse_libsvm`; values round-trip bit-exactly."""
    lines = []
    for i in range(ds.n):
        idx, val = ds.row(i)
        parts = ["+1" if ds.y[i] > 0 else "-1"]
        parts.extend(f"{int(j) + 1}:{float(v)!r}" for j, v in zip(idx, val))
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def save_libsvm(ds: SparseDataset, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_libsvm(ds))


def with_bias_feature(ds: SparseDataset) -> SparseDataset:
    """Append a constant-1 feature column (dimension becomes d+1)."""
    ones = sp.csr_matrix(np.ones((ds.n, 1)))
    return SparseDataset(sp.hstack([ds.X, ones], format="csr"), ds.y)


def apply_update(base: SparseDataset, plan: UpdatePlan) -> SparseDataset:
    """Materialize the updated dataset: drop removed rows, append added ones."""
    if plan.added.n and plan.added.d != base.d:
        raise ValueError(
            f"added rows have dimension {plan.added.d}, dataset has {base.d}"
        )
    for i in plan.removed:
        if i >= base.n:
            raise ValueError(f"removal index {i} out of range for n={base.n}")
    keep = np.ones(base.n, dtype=bool)
    keep[list(plan.removed)] = False
    X_kept = base.X[keep]
    y_kept = base.y[keep]
    if plan.added.n == 0:
        return SparseDataset(X_kept, y_kept)
    X_new = sp.vstack([X_kept, plan.added.X], format="csr")
    return SparseDataset(X_new, np.concatenate([y_kept, plan.added.y]))


def make_synthetic(
    seed: int,
    n: int,
    d: int,
    *,
    separation: float = 2.0,
    density: float = 1.0,
) -> SparseDataset:
    """Two-class Gaussian blobs, deterministic for a given seed.

    Class means sit at +/- separation/2 along a random unit direction;
    ``density`` < 1 zeroes entries at random while keeping at least one
    nonzero per row.
    """
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    if not 0.0 < density <= 1.0:
        raise ValueError("density must be in (0, 1]")
    if separation < 0:
        raise ValueError("separation must be nonnegative")
    rng = np.random.default_rng(seed)
    y = np.ones(n)
    y[: n // 2] = -1.0
    y = y[rng.permutation(n)]
    u = rng.standard_normal(d)
    u /= np.linalg.norm(u)
    X = rng.standard_normal((n, d)) + y[:, None] * (separation / 2.0) * u[None, :]
    if density < 1.0:
        mask = rng.random((n, d)) < density
        mask[np.arange(n), rng.integers(0, d, size=n)] = True
        X = np.where(mask, X, 0.0)
    return SparseDataset(sp.csr_matrix(X), y)
