"""Piecewise-affine function algebra.

Contains the PWA control-law representation (polytopic regions with
affine gains), convex PWA functions stored as a pointwise maximum of
affine pieces, invertible affine changes of variables, and the
decomposition of a continuous scalar PWA function into a difference of
two convex PWA functions.

The decomposition works on partitions whose union is convex (true for
every law produced by the multi-parametric enumeration): it measures
the gradient jump of the function across every interior facet, adds
just enough ramp along each offending hyperplane to make all jumps
nonnegative, and re-expresses both the ramp sum and the corrected
function as maxima of affine pieces over the arrangement cells realized
inside the partition.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import linprog

from .errors import (
    DiscontinuousInput,
    DimensionMismatch,
    EmptyPieces,
    NonInvertible,
    OutsidePartition,
    PreconditionError,
)
from .geometry import Box, Polytope, chebyshev_center, normalize_halfspace
from .validation import as_matrix, as_samples, as_vector

CONTAINS_SLACK = 1e-9
FACET_RADIUS_TOL = 1e-7
HYPERPLANE_DEDUP_TOL = 1e-6
CONTINUITY_TOL = 1e-6
JUMP_MARGIN = 1e-9


@dataclass(frozen=True)
class Region:
    """One polytopic region {x : Z x <= z} with affine law u = K x + g.

    K holds only the rows actually applied to the plant; enumeration
    keeps the full-horizon gains in K_full/g_full and the optimal active
    set when they are known.
    """

    Z: np.ndarray
    z: np.ndarray
    K: np.ndarray
    g: np.ndarray
    active_set: tuple[int, ...] | None = None
    K_full: np.ndarray | None = None
    g_full: np.ndarray | None = None

    def __post_init__(self):
        Z = as_matrix(self.Z, "Z")
        z = as_vector(self.z, "z", size=Z.shape[0])
        K = as_matrix(self.K, "K", shape=(None, Z.shape[1]))
        g = as_vector(self.g, "g", size=K.shape[0])
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "g", g)

    @property
    def polytope(self) -> Polytope:
        return Polytope(self.Z, self.z)

    def contains(self, x, tol: float = CONTAINS_SLACK):
        pts = np.asarray(x, dtype=float)
        if pts.ndim == 1:
            return bool(np.all(self.Z @ pts <= self.z + tol))
        return np.all(pts @ self.Z.T <= self.z + tol, axis=1)


@dataclass(frozen=True)
class PwaFunction:
    """Region-wise affine map; the lowest-index containing region wins."""

    regions: list[Region]
    n_x: int
    n_u: int

    def __post_init__(self):
        if not self.regions:
            raise PreconditionError("a PWA function needs at least one region")
        for r in self.regions:
            if r.Z.shape[1] != self.n_x or r.K.shape != (self.n_u, self.n_x):
                raise DimensionMismatch("region dimensions inconsistent with function")

    @property
    def n_regions(self) -> int:
        return len(self.regions)

    def locate(self, x, tol: float = CONTAINS_SLACK) -> int:
        xv = as_vector(x, "x", size=self.n_x)
        for idx, region in enumerate(self.regions):
            if region.contains(xv, tol):
                return idx
        raise OutsidePartition(f"state {xv.tolist()} lies in no region")

    def __call__(self, x) -> np.ndarray:
        region = self.regions[self.locate(x)]
        return region.K @ np.asarray(x, dtype=float) + region.g

    def eval_batch(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized point location: (values, located-mask)."""
        pts = as_samples(X, "X", n_features=self.n_x)
        out = np.zeros((pts.shape[0], self.n_u))
        todo = np.ones(pts.shape[0], dtype=bool)
        for region in self.regions:
            if not np.any(todo):
                break
            hit = todo & region.contains(pts)
            if np.any(hit):
                out[hit] = pts[hit] @ region.K.T + region.g
                todo[hit] = False
        return out, ~todo

    def to_json(self) -> dict:
        return {
            "n_x": self.n_x,
            "n_u": self.n_u,
            "regions": [
                {"Z": r.Z.tolist(), "z": r.z.tolist(), "K": r.K.tolist(), "g": r.g.tolist()}
                for r in self.regions
            ],
        }

    @staticmethod
    def from_json(data: dict) -> "PwaFunction":
        regions = [
            Region(
                np.asarray(r["Z"], float),
                np.asarray(r["z"], float),
                np.asarray(r["K"], float),
                np.asarray(r["g"], float),
            )
            for r in data["regions"]
        ]
        return PwaFunction(regions, int(data["n_x"]), int(data["n_u"]))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, sort_keys=True, indent=2)
            fh.write("\n")

    @staticmethod
    def load(path) -> "PwaFunction":
        with open(path) as fh:
            return PwaFunction.from_json(json.load(fh))


def eval_pwa(f: PwaFunction, x) -> np.ndarray:
    return f(x)


@dataclass(frozen=True)
class ConvexPwa:
    """max_i (a_i . x + b_i); convex by construction."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = as_matrix(self.a, "a")
        b = as_vector(self.b, "b", size=a.shape[0])
        if a.shape[0] < 1:
            raise EmptyPieces("need at least one affine piece")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n_pieces(self) -> int:
        return self.a.shape[0]

    @property
    def n_x(self) -> int:
        return self.a.shape[1]

    def value(self, x) -> float:
        return float(np.max(self.a @ np.asarray(x, dtype=float) + self.b))

    def values(self, X) -> np.ndarray:
        pts = as_samples(X, "X", n_features=self.n_x)
        return np.max(pts @ self.a.T + self.b, axis=1)

    def to_json(self) -> list:
        return [{"a": ai.tolist(), "b": float(bi)} for ai, bi in zip(self.a, self.b)]

    @staticmethod
    def from_json(data: list) -> "ConvexPwa":
        return ConvexPwa(
            np.asarray([d["a"] for d in data], dtype=float),
            np.asarray([d["b"] for d in data], dtype=float),
        )


@dataclass(frozen=True)
class AffineTransform:
    """v -> S v + t with invertible S."""

    S: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        S = as_matrix(self.S, "S")
        if S.shape[0] != S.shape[1]:
            raise DimensionMismatch("S must be square")
        t = as_vector(self.t, "t", size=S.shape[0])
        if abs(np.linalg.det(S)) <= 1e-12:
            raise NonInvertible("transform matrix is singular")
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "t", t)

    def __call__(self, v) -> np.ndarray:
        return self.S @ np.asarray(v, dtype=float) + self.t

    def apply_batch(self, V) -> np.ndarray:
        pts = as_samples(V, "V", n_features=self.S.shape[1])
        return pts @ self.S.T + self.t

    def inverse(self) -> "AffineTransform":
        s_inv = np.linalg.inv(self.S)
        return AffineTransform(s_inv, -s_inv @ self.t)

    def to_json(self) -> dict:
        return {"S": self.S.tolist(), "t": self.t.tolist()}

    @staticmethod
    def from_json(data: dict) -> "AffineTransform":
        return AffineTransform(np.asarray(data["S"], float), np.asarray(data["t"], float))


@dataclass(frozen=True)
class NormalizedPwa:
    Ax: AffineTransform
    Au: AffineTransform
    f_hat: PwaFunction


def normalize_domain(f: PwaFunction, state_box: Box, input_ranges) -> NormalizedPwa:
    """Change variables so states live in [0,1]^n_x and outputs are >= 0.

    The state map is the diagonal box-to-unit-cube transform; the output
    map is a pure shift by the per-output lower bound (unit scale keeps
    approximation errors in original input units).
    """
    if state_box.dim != f.n_x:
        raise DimensionMismatch("state box dimension mismatch")
    width = state_box.width
    if np.any(width <= 1e-12):
        raise NonInvertible("state box has a zero-width side")
    ranges = as_matrix(np.asarray(input_ranges, dtype=float).reshape(f.n_u, 2), "input_ranges")
    lo_u = ranges[:, 0]

    ax = AffineTransform(np.diag(1.0 / width), -state_box.lo / width)
    au = AffineTransform(np.eye(f.n_u), -lo_u)

    s_inv = np.diag(width)
    regions = []
    for r in f.regions:
        z_new = r.z - r.Z @ state_box.lo
        regions.append(
            Region(
                Z=r.Z @ s_inv,
                z=z_new,
                K=r.K @ s_inv,
                g=r.K @ state_box.lo + r.g - lo_u,
            )
        )
    return NormalizedPwa(Ax=ax, Au=au, f_hat=PwaFunction(regions, f.n_x, f.n_u))


# -- difference-of-convex decomposition ---------------------------------------


def _linear_range(rows_Z: np.ndarray, rows_z: np.ndarray, a: np.ndarray) -> tuple[float, float]:
    """Min and max of a . x over {Z x <= z} (bounded via the center box)."""
    bounds = [(-1e6, 1e6)] * a.size
    lo = linprog(a, A_ub=rows_Z, b_ub=rows_z, bounds=bounds, method="highs")
    hi = linprog(-a, A_ub=rows_Z, b_ub=rows_z, bounds=bounds, method="highs")
    if not (lo.success and hi.success):
        raise PreconditionError("region polytope is empty or ill-posed")
    return float(lo.fun), float(-hi.fun)


def _facet_geometry(region_a: Region, region_b: Region, a: np.ndarray, b: float):
    """Chebyshev center/radius of the two regions' shared face on a.x = b,
    measured inside the hyperplane; radius < 0 when empty."""
    basis = null_space(a.reshape(1, -1))
    anchor = b * a
    Z = np.vstack([region_a.Z, region_b.Z])
    z = np.concatenate([region_a.z, region_b.z]) - Z @ anchor
    face = Polytope(Z @ basis, z + 1e-12)
    center, radius = chebyshev_center(face)
    return anchor, basis, center, radius


def _split_cell(rows_Z, rows_z, a, b):
    """Split a cell by hyperplane a.x = b; returns surviving halves."""
    minus = (np.vstack([rows_Z, a]), np.append(rows_z, b))
    plus = (np.vstack([rows_Z, -a]), np.append(rows_z, -b))
    out = []
    for rows, sign in ((minus, 0), (plus, 1)):
        _, radius = chebyshev_center(Polytope(rows[0], rows[1]))
        if radius > 1e-9:
            out.append((rows[0], rows[1], sign))
    return out


def dc_decompose(f: PwaFunction, output: int = 0) -> tuple[ConvexPwa, ConvexPwa]:
    """Write one output row of a continuous PWA function as gamma - eta
    with both parts convex.

    Requires the partition's union to be convex. The returned functions
    satisfy gamma(x) - eta(x) == f(x) on the partition up to roundoff.
    """
    if not 0 <= output < f.n_u:
        raise PreconditionError(f"output index {output} out of range")
    rows = [f.regions[i].K[output] for i in range(f.n_regions)]
    offs = [float(f.regions[i].g[output]) for i in range(f.n_regions)]

    if f.n_regions == 1:
        gamma = ConvexPwa(rows[0].reshape(1, -1), np.array([offs[0]]))
        eta = ConvexPwa(np.zeros((1, f.n_x)), np.zeros(1))
        return gamma, eta

    # 1. unique hyperplanes of the partition
    hyperplanes: list[tuple[np.ndarray, float]] = []
    region_rows_on: list[list[int]] = [[] for _ in range(f.n_regions)]
    for idx, region in enumerate(f.regions):
        for row, rhs in zip(region.Z, region.z):
            norm = normalize_halfspace(row, rhs)
            if norm is None:
                continue
            key = np.append(norm[0], norm[1])
            hit = -1
            for k, (a_k, b_k) in enumerate(hyperplanes):
                if np.max(np.abs(key - np.append(a_k, b_k))) <= HYPERPLANE_DEDUP_TOL:
                    hit = k
                    break
            if hit < 0:
                hyperplanes.append(norm)
                hit = len(hyperplanes) - 1
            if hit not in region_rows_on[idx]:
                region_rows_on[idx].append(hit)

    # 2. side of every region w.r.t. every hyperplane: -1 / +1 / 0 (cut)
    side = np.zeros((f.n_regions, len(hyperplanes)), dtype=int)
    for i, region in enumerate(f.regions):
        for k, (a_k, b_k) in enumerate(hyperplanes):
            lo, hi = _linear_range(region.Z, region.z, a_k)
            if hi <= b_k + 1e-9:
                side[i, k] = -1
            elif lo >= b_k - 1e-9:
                side[i, k] = 1
            else:
                side[i, k] = 0

    # 3. facets: adjacent region pairs across each hyperplane, with the
    #    gradient jump measured toward the +a side
    sampler = np.random.default_rng(1234)
    min_jump: dict[int, float] = {}
    for k, (a_k, b_k) in enumerate(hyperplanes):
        candidates = [i for i in range(f.n_regions) if k in region_rows_on[i]]
        minus_side = [i for i in candidates if side[i, k] == -1]
        plus_side = [i for i in candidates if side[i, k] == 1]
        for i in minus_side:
            for j in plus_side:
                anchor, basis, center, radius = _facet_geometry(f.regions[i], f.regions[j], a_k, b_k)
                if radius <= FACET_RADIUS_TOL:
                    continue
                # continuity across the shared face
                local = sampler.random((16, basis.shape[1])) * 2.0 - 1.0
                local = center + 0.8 * radius * local / np.maximum(
                    np.linalg.norm(local, axis=1, keepdims=True), 1.0
                )
                pts = anchor + local @ basis.T
                vals_i = pts @ rows[i] + offs[i]
                vals_j = pts @ rows[j] + offs[j]
                if np.max(np.abs(vals_i - vals_j)) > CONTINUITY_TOL:
                    raise DiscontinuousInput(
                        f"regions {i} and {j} disagree across their shared face"
                    )
                jump = float((rows[j] - rows[i]) @ a_k)
                min_jump[k] = min(min_jump.get(k, np.inf), jump)

    lam = {k: max(0.0, -mu) + JUMP_MARGIN for k, mu in min_jump.items()}
    ramp_ids = sorted(lam)

    # 4. arrangement cells realized inside each region
    gamma_pieces: list[np.ndarray] = []
    eta_pieces: list[np.ndarray] = []

    def push(target: list[np.ndarray], coef: np.ndarray, const: float) -> None:
        entry = np.append(coef, const)
        for existing in target:
            if np.max(np.abs(existing - entry)) <= 1e-9:
                return
        target.append(entry)

    for i, region in enumerate(f.regions):
        cells = [(region.Z, region.z, {})]
        for k in ramp_ids:
            a_k, b_k = hyperplanes[k]
            if side[i, k] != 0:
                for cell in cells:
                    cell[2][k] = 1 if side[i, k] > 0 else 0
                continue
            new_cells = []
            for rows_Z, rows_z, signs in cells:
                for half_Z, half_z, sgn in _split_cell(rows_Z, rows_z, a_k, b_k):
                    extended = dict(signs)
                    extended[k] = sgn
                    new_cells.append((half_Z, half_z, extended))
            cells = new_cells
        for _, _, signs in cells:
            ramp_coef = np.zeros(f.n_x)
            ramp_const = 0.0
            for k in ramp_ids:
                if signs.get(k, 0):
                    a_k, b_k = hyperplanes[k]
                    ramp_coef += lam[k] * a_k
                    ramp_const -= lam[k] * b_k
            push(eta_pieces, ramp_coef, ramp_const)
            push(gamma_pieces, rows[i] + ramp_coef, offs[i] + ramp_const)

    gamma_arr = np.array(gamma_pieces)
    eta_arr = np.array(eta_pieces) if eta_pieces else np.zeros((1, f.n_x + 1))
    gamma = ConvexPwa(gamma_arr[:, :-1], gamma_arr[:, -1])
    eta = ConvexPwa(eta_arr[:, :-1], eta_arr[:, -1])
    return gamma, eta
