"""Deterministic dense numerics shared by every other module.

A "matrix" throughout the package is a plain 2-D float64 C-order ndarray
with one row per sample.  Randomness always flows through explicitly
seeded PCG64 generators, so a run is fully determined by its seed: the
same seed replays bit-identical values on any machine with the same
numpy version.
"""

from __future__ import annotations

from collections.abc import Callable

import numpy as np

__all__ = [
    "ShapeError",
    "NonFiniteError",
    "as_matrix",
    "matmul",
    "softmax",
    "cross_entropy",
    "batch_cross_entropy",
    "sgd_step",
    "finite_diff_gradient",
    "relative_error",
    "make_rng",
    "derive_rng",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class NonFiniteError(FloatingPointError):
    """A value that must be finite came out NaN or infinite."""


def as_matrix(values, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Coerce ``values`` to a 2-D float64 C-order array, optionally checking its shape.

    Accepts nested sequences or ndarrays.  1-D input is rejected rather
    than silently promoted; callers must be explicit about row/column
    orientation.
    """
    m = np.ascontiguousarray(values, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got {m.ndim}-D data of shape {m.shape}")
    if rows is not None and m.shape[0] != rows:
        raise ShapeError(f"expected {rows} rows, got {m.shape[0]}")
    if cols is not None and m.shape[1] != cols:
        raise ShapeError(f"expected {cols} columns, got {m.shape[1]}")
    return m


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with explicit contract checks.

    Raises ShapeError naming both shapes on an inner-dimension mismatch
    and NonFiniteError if the product overflows to inf or produces NaN.
    """
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul inner dimensions differ: {a.shape} @ {b.shape} "
            f"({a.shape[1]} != {b.shape[0]})"
        )
    out = a @ b
    if not np.all(np.isfinite(out)):
        raise NonFiniteError("matmul produced non-finite entries")
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction so large logits cannot overflow."""
    m = as_matrix(logits)
    shifted = m - m.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, label: int) -> tuple[float, np.ndarray]:
    """Cross-entropy of a single sample and its gradient w.r.t. the logits.

    Args:
        logits: 1 x L matrix of unnormalized scores.
        label: true class index in [0, L).

    Returns:
        (loss, grad) where grad is 1 x L and equals softmax(logits) minus
        the one-hot label row.  The loss is computed from shifted logits
        (log-sum-exp with max subtraction), so saturated inputs such as
        [10, -10] yield a tiny but exact positive loss instead of log(1).
    """
    m = as_matrix(logits, rows=1)
    n_classes = m.shape[1]
    if not 0 <= label < n_classes:
        raise ValueError(f"label {label} out of range for {n_classes} classes")
    losses, grads = batch_cross_entropy(m, np.array([label]))
    return float(losses[0]), grads


def batch_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-row cross-entropy losses and gradients for a batch.

    Returns (losses, grads) with losses of shape (n,) and grads of shape
    (n, L); grads are per-sample, not averaged, so callers own the batch
    reduction.
    """
    m = as_matrix(logits)
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if y.shape[0] != m.shape[0]:
        raise ShapeError(f"{m.shape[0]} logit rows but {y.shape[0]} labels")
    n_classes = m.shape[1]
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes})")
    shifted = m - m.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(m.shape[0])
    losses = log_z - shifted[rows, y]
    grads = softmax(m)
    grads[rows, y] -= 1.0
    return losses, grads


def sgd_step(params: np.ndarray, grads: np.ndarray, lr: float) -> np.ndarray:
    """Return params - lr * grads as a new array; inputs are never mutated."""
    p = np.asarray(params, dtype=np.float64)
    g = np.asarray(grads, dtype=np.float64)
    if p.shape != g.shape:
        raise ShapeError(f"params shape {p.shape} != grads shape {g.shape}")
    if not np.isfinite(lr) or lr < 0.0:
        raise ValueError(f"learning rate must be finite and non-negative, got {lr}")
    return p - lr * g


def finite_diff_gradient(
    f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5
) -> np.ndarray:
    """Central finite-difference gradient of a scalar function of a flat vector.

    Used as the independent oracle against hand-derived backprop.  Raises
    NonFiniteError if any probe of f returns a non-finite value.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    grad = np.empty_like(x)
    for i in range(x.size):
        bumped = x.copy()
        bumped[i] = x[i] + h
        hi = f(bumped)
        bumped[i] = x[i] - h
        lo = f(bumped)
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise NonFiniteError(f"objective returned non-finite value at coordinate {i}")
        grad[i] = (hi - lo) / (2.0 * h)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise |a - b| / max(1, |a|, |b|), the gradient-check metric."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    scale = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return np.abs(a - b) / scale


def make_rng(seed: int) -> np.random.Generator:
    """Root PCG64 generator for a run."""
    return np.random.default_rng(np.random.SeedSequence(seed))


def derive_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent named substream of a seed.

    Streams are identified by small integer tags; (seed, tags...) feeds a
    SeedSequence, so distinct tag paths give statistically independent
    generators while identical paths replay identical values.
    """
    return np.random.default_rng(np.random.SeedSequence([seed, *stream]))
