"""Polytopes in halfspace form and the small geometric routines built on them.

A polytope is ``{x : C x <= c}``. The Chebyshev-center LP doubles as the
nonemptiness test used throughout the explicit-MPC enumeration; centers
are confined to a large box so the LP stays bounded even for unbounded
polyhedra (only the sign of the radius matters in that case).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import DimensionMismatch, PreconditionError
from .validation import as_matrix, as_vector

CENTER_BOUND = 1e6
RADIUS_BOUND = 1e6


@dataclass(frozen=True)
class Polytope:
    """Halfspace representation {x : C x <= c}."""

    C: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        C = as_matrix(self.C, "C")
        c = as_vector(self.c, "c")
        if C.shape[0] != c.size:
            raise DimensionMismatch(f"C has {C.shape[0]} rows but c has {c.size}")
        if C.shape[0] < 1:
            raise PreconditionError("polytope needs at least one halfspace")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "c", c)

    @property
    def dim(self) -> int:
        return self.C.shape[1]

    def contains(self, x, tol: float = 1e-9):
        """Membership test; vectorized over rows of a 2-D input."""
        pts = np.asarray(x, dtype=float)
        if pts.ndim == 1:
            return bool(np.all(self.C @ pts <= self.c + tol))
        return np.all(pts @ self.C.T <= self.c + tol, axis=1)

    def violation(self, x) -> float:
        return float(np.max(self.C @ np.asarray(x, dtype=float) - self.c))

    def intersect(self, other: "Polytope") -> "Polytope":
        if other.dim != self.dim:
            raise DimensionMismatch("intersecting polytopes of different dimension")
        return Polytope(np.vstack([self.C, other.C]), np.concatenate([self.c, other.c]))

    def to_json(self) -> dict:
        return {"C": self.C.tolist(), "c": self.c.tolist()}

    @staticmethod
    def from_json(data: dict) -> "Polytope":
        return Polytope(np.asarray(data["C"], dtype=float), np.asarray(data["c"], dtype=float))


@dataclass(frozen=True)
class Box:
    """Axis-aligned box [lo, hi], the sampling and normalization primitive."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = as_vector(self.lo, "lo")
        hi = as_vector(self.hi, "hi", size=lo.size)
        if np.any(hi < lo):
            raise PreconditionError("box upper bound below lower bound")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    def sample(self, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        return self.lo + rng.random((n, self.dim)) * self.width

    def to_polytope(self) -> Polytope:
        eye = np.eye(self.dim)
        return Polytope(np.vstack([eye, -eye]), np.concatenate([self.hi, -self.lo]))

    def to_json(self) -> list:
        return [self.lo.tolist(), self.hi.tolist()]

    @staticmethod
    def from_json(data) -> "Box":
        return Box(np.asarray(data[0], dtype=float), np.asarray(data[1], dtype=float))


def symmetric_box(bounds) -> Box:
    b = as_vector(bounds, "bounds")
    return Box(-b, b)


def box_bounds_of(poly: Polytope) -> tuple[np.ndarray, np.ndarray] | None:
    """Per-coordinate bounds if every row of the polytope is axis-aligned.

    Returns (lo, hi) with +-inf where a side is missing, or None when some
    row involves more than one coordinate.
    """
    d = poly.dim
    lo = np.full(d, -np.inf)
    hi = np.full(d, np.inf)
    for row, rhs in zip(poly.C, poly.c):
        nz = np.nonzero(np.abs(row) > 1e-12)[0]
        if nz.size == 0:
            if rhs < -1e-12:
                return None  # empty, not a box
            continue
        if nz.size > 1:
            return None
        j = nz[0]
        coef = row[j]
        if coef > 0:
            hi[j] = min(hi[j], rhs / coef)
        else:
            lo[j] = max(lo[j], rhs / coef)
    return lo, hi


def chebyshev_center(poly: Polytope) -> tuple[np.ndarray, float]:
    """Center and radius of the largest inscribed ball.

    Radius is -1.0 when the polytope is empty. Unbounded polyhedra report
    the capped radius RADIUS_BOUND.
    """
    C, c = poly.C, poly.c
    norms = np.linalg.norm(C, axis=1)
    d = poly.dim
    # variables: (center, r); maximize r
    cost = np.zeros(d + 1)
    cost[-1] = -1.0
    a_ub = np.hstack([C, norms.reshape(-1, 1)])
    bounds = [(-CENTER_BOUND, CENTER_BOUND)] * d + [(-RADIUS_BOUND, RADIUS_BOUND)]
    res = linprog(cost, A_ub=a_ub, b_ub=c, bounds=bounds, method="highs")
    if not res.success:
        return np.zeros(d), -1.0
    center = res.x[:d]
    radius = float(res.x[d])
    return center, radius


def normalize_halfspace(a, b, tol: float = 1e-12):
    """Scale (a, b) to unit normal with a canonical sign.

    The first coefficient of a that is nonzero (beyond tol) is made
    positive, so (a, b) and (-2a, -2b) normalize identically. Returns
    None for an all-zero normal.
    """
    a = np.asarray(a, dtype=float)
    norm = np.linalg.norm(a)
    if norm <= tol:
        return None
    a = a / norm
    b = float(b) / norm
    for coef in a:
        if abs(coef) > tol:
            if coef < 0:
                a = -a
                b = -b
            break
    return a, b


def dedup_rows(rows: list[np.ndarray], tol: float) -> list[np.ndarray]:
    """Greedy dedup of stacked coefficient rows within an infinity-norm tol."""
    unique: list[np.ndarray] = []
    for row in rows:
        if not any(np.max(np.abs(row - u)) <= tol for u in unique):
            unique.append(row)
    return unique
