"""Input validation helpers.

Every public entry point funnels its array arguments through these so
that shape and finiteness errors surface with a clear message instead
of a numpy broadcast failure deep inside an algorithm.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, PreconditionError


def as_vector(x, name: str = "x", size: int | None = None) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        v = v.reshape(-1)
    if not np.all(np.isfinite(v)):
        raise PreconditionError(f"{name} contains non-finite entries")
    if size is not None and v.size != size:
        raise DimensionMismatch(f"{name} has length {v.size}, expected {size}")
    return v


def as_matrix(a, name: str = "A", shape: tuple[int | None, int | None] | None = None) -> np.ndarray:
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise PreconditionError(f"{name} contains non-finite entries")
    if shape is not None:
        rows, cols = shape
        if rows is not None and m.shape[0] != rows:
            raise DimensionMismatch(f"{name} has {m.shape[0]} rows, expected {rows}")
        if cols is not None and m.shape[1] != cols:
            raise DimensionMismatch(f"{name} has {m.shape[1]} columns, expected {cols}")
    return m


def as_samples(x, name: str = "X", n_features: int | None = None) -> np.ndarray:
    """Coerce to a (n_samples, n_features) array, promoting a single sample."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    return as_matrix(arr, name=name, shape=(None, n_features))


def check_symmetric(a: np.ndarray, name: str = "A", tol: float = 1e-10) -> np.ndarray:
    m = as_matrix(a, name)
    if m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got {m.shape}")
    if m.size and np.max(np.abs(m - m.T)) > tol * max(1.0, np.max(np.abs(m))):
        raise PreconditionError(f"{name} is not symmetric within {tol}")
    return 0.5 * (m + m.T)


def check_min_eigenvalue(a: np.ndarray, floor: float, name: str = "A") -> np.ndarray:
    m = check_symmetric(a, name)
    if m.size and np.linalg.eigvalsh(m)[0] < floor:
        raise PreconditionError(
            f"{name} has an eigenvalue below {floor} (got {np.linalg.eigvalsh(m)[0]:.3e})"
        )
    return m
