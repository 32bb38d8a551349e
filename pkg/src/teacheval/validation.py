"""Small input-validation helpers shared across modules."""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from .errors import BadRatios, InvalidWeights, LengthMismatch, NonDistribution


def as_labels(x, name: str = "labels") -> np.ndarray:
    """Coerce to a 1-d integer array."""
    arr = np.asarray(x)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    return arr.astype(np.int64)


def check_equal_length(a, b, names: str = "y_true/y_pred") -> None:
    if len(a) != len(b):
        raise LengthMismatch(f"{names} lengths differ: {len(a)} vs {len(b)}")
    if len(a) == 0:
        raise LengthMismatch(f"{names} must be non-empty")


def check_prob_rows(probs: np.ndarray, tol: float = 1e-4) -> None:
    """Every row must be a distribution: nonnegative, summing to 1 within tol."""
    if np.any(probs < -tol):
        raise NonDistribution("probability rows contain negative entries")
    sums = probs.sum(axis=-1)
    off = np.abs(sums - 1.0)
    if np.any(off > tol):
        raise NonDistribution(f"probability row sums off by up to {off.max():.3g}")


def check_ratios(ratios: Sequence[float]) -> tuple[float, ...]:
    r = tuple(float(x) for x in ratios)
    if any(x < 0 for x in r):
        raise BadRatios(f"ratios must be nonnegative, got {r}")
    if abs(sum(r) - 1.0) > 1e-9:
        raise BadRatios(f"ratios must sum to 1 within 1e-9, got {r} (sum {sum(r)!r})")
    return r


def check_class_weights(weights: Sequence[float], m: int) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (m,):
        raise InvalidWeights(f"expected {m} class weights, got shape {w.shape}")
    if np.any(w <= 0):
        raise InvalidWeights(f"class weights must be strictly positive, got {w.tolist()}")
    return w
