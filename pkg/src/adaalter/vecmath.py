"""Small dense-vector helpers shared by the optimizer and cluster code.

All parameter vectors are 1-d float64 numpy arrays. Reductions over workers
use a fixed left-to-right order so that runs are bit-reproducible regardless
of how the caller gathered the inputs.
"""

from __future__ import annotations

import numpy as np


def as_vector(x, d: int | None = None) -> np.ndarray:
    """Coerce x to a 1-d float64 array, optionally checking its length."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got shape {v.shape}")
    if d is not None and v.shape[0] != d:
        raise ValueError(f"expected dimension {d}, got {v.shape[0]}")
    return v


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise product of two equal-length vectors."""
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a * b


def inv_sqrt_shifted(b2: np.ndarray, c: float) -> np.ndarray:
    """Elementwise 1 / sqrt(b2[j] + c).

    The radicand must be strictly positive in every coordinate; a zero or
    negative entry means an accumulator invariant was broken upstream.
    """
    rad = b2 + c
    if not (rad > 0.0).all():
        raise ValueError(
            f"nonpositive radicand in inv_sqrt_shifted (min {rad.min()!r}); "
            "accumulator state is invalid"
        )
    return 1.0 / np.sqrt(rad)


def average(vectors) -> np.ndarray:
    """Mean of a list of equal-length vectors, accumulated left to right.

    Intentionally not np.mean over a stacked matrix: the explicit loop pins
    the summation order, which keeps multi-worker reductions deterministic.
    """
    vectors = list(vectors)
    if not vectors:
        raise ValueError("average() needs at least one vector")
    acc = vectors[0].astype(np.float64, copy=True)
    for v in vectors[1:]:
        if v.shape != acc.shape:
            raise ValueError(f"dimension mismatch in average: {v.shape} vs {acc.shape}")
        acc += v
    return acc / len(vectors)


def sq_norm(v: np.ndarray) -> float:
    """Squared Euclidean norm as a Python float."""
    return float(np.dot(v, v))


def check_finite(v: np.ndarray, what: str) -> None:
    """Raise if v contains NaN or Inf. `what` names the offender in the error."""
    if not np.isfinite(v).all():
        raise FloatingPointError(f"{what} contains non-finite entries")
