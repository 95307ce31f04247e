"""Elementwise activations, binary cross entropy, and gradient clipping.

Everything here operates on plain numpy arrays and is shared by the LSTM
cells, the classifier head, and the decoder softmax.
"""
from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError, InvalidInputError

BCE_EPS = 1e-7  # predictions are clamped to [BCE_EPS, 1 - BCE_EPS] before log


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Softmax along `axis`, shifted by the max for stability."""
    x = np.asarray(x, dtype=np.float64)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def activation(kind: str, x: np.ndarray) -> np.ndarray:
    """Apply a named activation to a vector.

    `kind` is one of ``sigmoid`` (elementwise, range (0, 1)) or ``softmax``
    (normalised to sum 1).  Non-finite input is rejected.
    """
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"activation '{kind}' received non-finite input")
    if kind == "sigmoid":
        return sigmoid(arr)
    if kind == "softmax":
        return softmax(arr)
    raise ConfigurationError(f"unknown activation kind: {kind!r}")


def bce_loss(preds, labels) -> float:
    """Mean binary cross entropy.

    Predictions are clamped to [1e-7, 1 - 1e-7] so a confidently wrong
    prediction yields a large but finite loss.
    """
    p = np.asarray(preds, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape:
        raise InvalidInputError(
            f"preds and labels differ in shape: {p.shape} vs {y.shape}"
        )
    p = np.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    return float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))))


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place so their global L2 norm is <= max_norm.

    Returns the pre-clip global norm.
    """
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm
