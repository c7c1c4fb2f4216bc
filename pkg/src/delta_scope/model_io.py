"""Model artifact persistence.

A trained model is stored as a small JSON document with the coefficient
vector base64-encoded as little-endian float64 bytes, so save/load
round-trips are bit-exact and the file is byte-identical across runs and
platforms.
"""
from __future__ import annotations

import base64
import json
import os
import tempfile

import numpy as np

from .losses import LossKind
from .solver import TrainedModel

__all__ = ["MODEL_FORMAT", "MODEL_VERSION", "save_model", "load_model", "model_to_dict"]

MODEL_FORMAT = "delta-scope-model"
MODEL_VERSION = 1


def model_to_dict(model: TrainedModel) -> dict:
    beta_bytes = np.ascontiguousarray(model.beta, dtype="<f8").tobytes()
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "d": model.d,
        "n_train": model.n_train,
        "lambda": model.lam,
        "loss": model.kind.value,
        "grad_residual": model.grad_residual,
        "beta_encoding": "base64-le-f8",
        "beta": base64.b64encode(beta_bytes).decode("ascii"),
    }


def _atomic_write_text(path: str | os.PathLike, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_model(model: TrainedModel, path: str | os.PathLike) -> None:
    text = json.dumps(model_to_dict(model), sort_keys=True, separators=(",", ":"))
    _atomic_write_text(path, text + "\n")


def load_model(path: str | os.PathLike) -> TrainedModel:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(obj, dict) or obj.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not a {MODEL_FORMAT} file")
    if obj.get("version") != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported version {obj.get('version')!r}")
    try:
        d = int(obj["d"])
        n_train = int(obj["n_train"])
        lam = float(obj["lambda"])
        kind = LossKind.from_name(obj["loss"])
        residual = float(obj["grad_residual"])
        encoding = obj["beta_encoding"]
        raw = base64.b64decode(obj["beta"], validate=True)
    except (KeyError, ValueError, TypeError) as exc:
        raise ValueError(f"{path}: malformed model file ({exc})") from None
    if encoding != "base64-le-f8":
        raise ValueError(f"{path}: unknown beta encoding {encoding!r}")
    beta = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    if beta.shape[0] != d:
        raise ValueError(f"{path}: beta has {beta.shape[0]} entries, header says {d}")
    if lam <= 0:
        raise ValueError(f"{path}: lambda must be positive")
    return TrainedModel(beta, lam, kind, residual, n_train)
