"""Small input-validation helpers shared by the estimators."""

import math

import numpy as np

from .exceptions import LengthMismatch, ShapeMismatch


def round_half_up(x):
    """Round a non-negative count the way a person would (2.5 -> 3).

    A tiny tolerance absorbs float error such as ``0.4 * 10 = 4.000000001``.
    """
    return int(math.floor(x + 0.5 + 1e-9))


def check_binary(y, name="y"):
    y = np.asarray(y)
    if y.ndim != 1:
        raise ShapeMismatch(f"{name} must be 1-D, got shape {y.shape}")
    if y.size and not np.isin(y, (0, 1)).all():
        raise ValueError(f"{name} must contain only 0 and 1")
    return y.astype(np.int64)


def check_binary_pair(pred, truth):
    pred = check_binary(pred, "predictions")
    truth = check_binary(truth, "truth")
    if pred.shape != truth.shape:
        raise LengthMismatch(
            f"predictions have length {pred.size} but truth has length {truth.size}"
        )
    return pred, truth


def check_segments(X, name="segments"):
    """Return ``X`` as a float array of shape (n_segments, L, D)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3:
        raise ShapeMismatch(f"{name} must have shape (n, L, D), got {X.shape}")
    if not np.isfinite(X).all():
        raise ValueError(f"{name} contain non-finite values")
    return X


def check_embeddings(X, d=None, name="embeddings"):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None]
    if X.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2-D, got shape {X.shape}")
    if d is not None and X.shape[1] != d:
        raise ShapeMismatch(f"{name} have width {X.shape[1]}, expected {d}")
    if not np.isfinite(X).all():
        raise ValueError(f"{name} contain non-finite values")
    return X


def check_random_state(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def as_index_array(idx):
    return np.asarray(sorted(int(i) for i in idx), dtype=np.int64)
