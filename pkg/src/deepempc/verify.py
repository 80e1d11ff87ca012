"""Statistical verification of closed-loop controllers.

Trajectories from sampled initial states are labeled +1 when every
state and input along the way satisfies its constraint polytope and -1
otherwise (a controller failure also counts as -1). Two explicit safe
sets are fitted to the labeled initial states: a trace-minimal
ellipsoid excluding every invalid point, and a soft-margin RBF support
vector machine; both are scored by volume/false-positive metrics and a
Hoeffding confidence bound.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .dynamics import Scenario, Trajectory
from .errors import (
    EmptyDenominator,
    EmptyPositiveReference,
    InfeasibleMargin,
    NoConvergence,
    PreconditionError,
    SingleClassInput,
)
from .geometry import Polytope
from .validation import as_samples, as_vector

BOUND_TOL = 1e-12


def mtl_label(traj: Trajectory, X: Polytope, U: Polytope) -> int:
    """+1 iff every state and every input satisfies its polytope."""
    states_ok = bool(np.all(traj.states @ X.C.T <= X.c))
    inputs_ok = traj.inputs.shape[0] == 0 or bool(np.all(traj.inputs @ U.C.T <= U.c))
    return 1 if states_ok and inputs_ok else -1


@dataclass(frozen=True)
class LabeledInitialSet:
    """Initial states with their closed-loop safety labels."""

    X: np.ndarray
    y: np.ndarray
    provenance: str = ""
    seed: int = 0

    def __post_init__(self):
        X = as_samples(self.X, "X")
        y = np.asarray(self.y, dtype=int)
        if y.shape != (X.shape[0],):
            raise PreconditionError("one label per point required")
        if X.shape[0] and not np.all(np.isin(y, (-1, 1))):
            raise PreconditionError("labels must be +1 or -1")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def positives(self) -> np.ndarray:
        return self.X[self.y == 1]

    @property
    def negatives(self) -> np.ndarray:
        return self.X[self.y == -1]

    def save_csv(self, path) -> None:
        header = [f"x{i}" for i in range(self.X.shape[1])] + ["label"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for x, label in zip(self.X, self.y):
                writer.writerow([f"{v:.17g}" for v in x] + [str(int(label))])

    @staticmethod
    def load_csv(path, provenance: str = "", seed: int = 0) -> "LabeledInitialSet":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            rows = list(reader)
        data = np.array([[float(v) for v in row] for row in rows])
        return LabeledInitialSet(X=data[:, :-1], y=data[:, -1].astype(int),
                                 provenance=provenance, seed=seed)


def simulate_labels(controller, scenario: Scenario, X0) -> np.ndarray:
    """Closed-loop safety labels for a batch of initial states.

    Steps all trajectories simultaneously; a trajectory freezes once its
    label is decided (constraint violation or controller failure).
    """
    X = as_samples(X0, "X0", n_features=scenario.n_x).copy()
    n = X.shape[0]
    valid = np.asarray(scenario.X.contains(X))
    alive = valid.copy()
    A_t, B_t = scenario.system.A.T, scenario.system.B.T
    for _ in range(scenario.k_end):
        idx = np.nonzero(alive)[0]
        if idx.size == 0:
            break
        u, ok = controller.predict_with_mask(X[idx])
        failed = idx[~ok]
        valid[failed] = False
        alive[failed] = False
        good = idx[ok]
        if good.size == 0:
            continue
        u = u[ok]
        u_ok = np.asarray(scenario.U.contains(u))
        X[good] = X[good] @ A_t + u @ B_t
        x_ok = np.asarray(scenario.X.contains(X[good]))
        still = u_ok & x_ok
        valid[good[~still]] = False
        alive[good] = still
    return np.where(valid, 1, -1)


def draw_initial_states(scenario: Scenario, n: int, seed: int, stream: int) -> np.ndarray:
    rng = np.random.default_rng([seed, 29, stream])
    return scenario.sample_box.sample(rng, n)


def generate_labeled_sets(controller, scenario: Scenario, sizes: dict, seed: int,
                          provenance: str = "") -> dict:
    """Labeled sets {g, t, v} for one controller.

    The initial states depend only on (seed, set name), so two calls
    with different controllers label identical points; that is what
    makes the t-sets of an approximate controller and of the oracle
    directly comparable.
    """
    for key in ("g", "t", "v"):
        if int(sizes[key]) < 1:
            raise PreconditionError(f"size {key!r} must be >= 1")
    out = {}
    for stream, key in enumerate(("g", "t", "v")):
        x0 = draw_initial_states(scenario, int(sizes[key]), seed, stream)
        labels = simulate_labels(controller, scenario, x0)
        out[key] = LabeledInitialSet(X=x0, y=labels, provenance=provenance, seed=seed)
    return out


# -- ellipsoidal safe set ------------------------------------------------------


class EllipsoidSafeSet(BaseEstimator):
    """Safe set {x : x' E x <= 1} with E of minimal trace among the
    matrices excluding every invalid training point by the margin
    epsilon, subject to E >= floor * I.

    Solved by projected gradient: the trace gradient is the identity,
    the spectral floor is enforced by eigenvalue clipping, and each
    violated exclusion constraint is a halfspace in matrix space whose
    projection is a rank-one correction.
    """

    def __init__(self, epsilon: float = 0.05, floor: float = 0.0,
                 step: float = 1e-2, max_iter: int = 10_000, stat_tol: float = 1e-6):
        self.epsilon = epsilon
        self.floor = floor
        self.step = step
        self.max_iter = max_iter
        self.stat_tol = stat_tol

    def fit(self, X, y=None):
        """Fit to the invalid initial states (rows of X)."""
        if self.epsilon < 0:
            raise PreconditionError("epsilon must be >= 0")
        pts = np.asarray(X, dtype=float)
        if pts.ndim != 2 or pts.shape[1] < 1:
            raise PreconditionError("invalid points must form a (n, n_x) array")
        d = pts.shape[1]
        target = 1.0 + self.epsilon
        if pts.shape[0] == 0:
            self.E_ = self.floor * np.eye(d)
            self.n_constraints_ = 0
            return self
        pts = as_samples(pts, "X")
        sq_norms = np.sum(pts**2, axis=1)
        if np.any(sq_norms <= 1e-12):
            raise InfeasibleMargin("an invalid point at the origin cannot be excluded")

        E = self._project(self.floor * np.eye(d), pts, sq_norms, target)
        best = E.copy()
        best_trace = np.trace(best)
        alpha = self.step
        for _ in range(self.max_iter):
            candidate = self._project(E - alpha * np.eye(d), pts, sq_norms, target)
            move = np.linalg.norm(candidate - E) / alpha
            tr = np.trace(candidate)
            if tr < best_trace - 1e-15:
                best, best_trace = candidate.copy(), tr
                E = candidate
            else:
                alpha *= 0.5
                E = candidate
                if alpha < 1e-12:
                    break
            if move <= self.stat_tol:
                break
        self.E_ = self._project(best, pts, sq_norms, target)
        self.n_constraints_ = pts.shape[0]
        return self

    def _project(self, E: np.ndarray, pts: np.ndarray, sq_norms: np.ndarray,
                 target: float) -> np.ndarray:
        """Projection passes: spectral floor first, then exclusion
        constraints (whose rank-one corrections keep the floor intact)."""
        vals, vecs = np.linalg.eigh(0.5 * (E + E.T))
        vals = np.maximum(vals, self.floor)
        E = (vecs * vals) @ vecs.T
        quad = np.einsum("ni,ij,nj->n", pts, E, pts)
        # overshoot by a sliver so the exclusion stays strict under roundoff
        for m in np.nonzero(quad < target - BOUND_TOL)[0]:
            gap = target + 1e-9 - pts[m] @ E @ pts[m]
            if gap > 0:
                E = E + (gap / sq_norms[m] ** 2) * np.outer(pts[m], pts[m])
        return 0.5 * (E + E.T)

    def quad_form(self, X) -> np.ndarray:
        pts = as_samples(X, "X", n_features=self.E_.shape[0])
        return np.einsum("ni,ij,nj->n", pts, self.E_, pts)

    def contains(self, X) -> np.ndarray:
        return self.quad_form(X) <= 1.0

    def predict(self, X) -> np.ndarray:
        return np.where(self.contains(X), 1, -1)

    def to_json(self) -> dict:
        return {"E": self.E_.tolist(), "epsilon": self.epsilon, "floor": self.floor}

    @staticmethod
    def from_json(data: dict) -> "EllipsoidSafeSet":
        out = EllipsoidSafeSet(epsilon=float(data["epsilon"]), floor=float(data.get("floor", 0.0)))
        out.E_ = np.asarray(data["E"], dtype=float)
        return out


def fit_ellipsoid(invalid_points, epsilon: float = 0.05, floor: float = 0.0) -> EllipsoidSafeSet:
    return EllipsoidSafeSet(epsilon=epsilon, floor=floor).fit(np.asarray(invalid_points, dtype=float))


def ellipsoid_contains(s: EllipsoidSafeSet, x) -> bool:
    return bool(s.contains(np.asarray(x, dtype=float).reshape(1, -1))[0])


# -- support-vector-machine safe set -------------------------------------------


def rbf_kernel(X: np.ndarray, Z: np.ndarray, nu: float) -> np.ndarray:
    sq = (
        np.sum(X**2, axis=1)[:, None]
        + np.sum(Z**2, axis=1)[None, :]
        - 2.0 * X @ Z.T
    )
    return np.exp(-nu * np.maximum(sq, 0.0))


class SvmSafeSet(BaseEstimator):
    """Soft-margin RBF classifier fitted in the dual by sequential
    minimal optimization on maximal-violating pairs."""

    def __init__(self, C: float = 10.0, nu: float | None = None,
                 tol: float = 1e-5, max_iter: int | None = None):
        self.C = C
        self.nu = nu
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        X = as_samples(X, "X")
        y = np.asarray(y, dtype=float).reshape(-1)
        if X.shape[0] != y.size:
            raise PreconditionError("one label per sample required")
        if self.C <= 0:
            raise PreconditionError("C must be positive")
        if not (np.any(y > 0) and np.any(y < 0)):
            raise SingleClassInput("both classes are required")
        nu = (1.0 / X.shape[1]) if self.nu is None else self.nu
        if nu <= 0:
            raise PreconditionError("kernel width nu must be positive")

        n = X.shape[0]
        max_iter = self.max_iter or max(200_000, 100 * n)
        full_gram = n <= 3000
        gram = rbf_kernel(X, X, nu) if full_gram else None
        cache: dict[int, np.ndarray] = {}
        cache_cap = max(64, int(3e8 / (8 * max(n, 1))))

        def row(i: int) -> np.ndarray:
            if full_gram:
                return gram[i]
            hit = cache.get(i)
            if hit is None:
                hit = rbf_kernel(X[i : i + 1], X, nu)[0]
                if len(cache) >= cache_cap:
                    cache.pop(next(iter(cache)))
                cache[i] = hit
            return hit

        alpha = np.zeros(n)
        f = np.zeros(n)  # f_i = sum_j alpha_j y_j K_ij
        gap = np.inf
        for iteration in range(max_iter):
            shifted = y - f  # -E_i
            up = ((y > 0) & (alpha < self.C - BOUND_TOL)) | ((y < 0) & (alpha > BOUND_TOL))
            low = ((y < 0) & (alpha < self.C - BOUND_TOL)) | ((y > 0) & (alpha > BOUND_TOL))
            up_idx = np.nonzero(up)[0]
            low_idx = np.nonzero(low)[0]
            if up_idx.size == 0 or low_idx.size == 0:
                gap = 0.0
                break
            i = up_idx[int(np.argmax(shifted[up_idx]))]
            j = low_idx[int(np.argmin(shifted[low_idx]))]
            gap = float(shifted[i] - shifted[j])
            if gap <= self.tol:
                break

            k_i, k_j = row(i), row(j)
            if y[i] != y[j]:
                lo = max(0.0, alpha[j] - alpha[i])
                hi = min(self.C, self.C + alpha[j] - alpha[i])
            else:
                lo = max(0.0, alpha[i] + alpha[j] - self.C)
                hi = min(self.C, alpha[i] + alpha[j])
            eta = max(k_i[i] + k_j[j] - 2.0 * k_i[j], 1e-12)
            a_j = alpha[j] + y[j] * ((f[i] - y[i]) - (f[j] - y[j])) / eta
            a_j = min(max(a_j, lo), hi)
            a_i = alpha[i] + y[i] * y[j] * (alpha[j] - a_j)
            d_i, d_j = a_i - alpha[i], a_j - alpha[j]
            alpha[i], alpha[j] = a_i, a_j
            f += d_i * y[i] * k_i + d_j * y[j] * k_j
        else:
            raise NoConvergence(f"SMO gap {gap:.3e} above {self.tol} after {max_iter} updates")

        shifted = y - f
        up = ((y > 0) & (alpha < self.C - BOUND_TOL)) | ((y < 0) & (alpha > BOUND_TOL))
        low = ((y < 0) & (alpha < self.C - BOUND_TOL)) | ((y > 0) & (alpha > BOUND_TOL))
        free = (alpha > BOUND_TOL) & (alpha < self.C - BOUND_TOL)
        if np.any(free):
            bias = float(np.mean(shifted[free]))
        else:
            hi = np.max(shifted[up]) if np.any(up) else 0.0
            lo = np.min(shifted[low]) if np.any(low) else 0.0
            bias = float(0.5 * (hi + lo))

        sv = alpha > BOUND_TOL
        self.support_vectors_ = X[sv]
        self.dual_coef_ = alpha[sv] * y[sv]
        self.intercept_ = bias
        self.kernel_width_ = nu
        self.n_iter_ = iteration + 1
        self.kkt_gap_ = gap
        return self

    def decision_function(self, X) -> np.ndarray:
        pts = as_samples(X, "X", n_features=self.support_vectors_.shape[1])
        return rbf_kernel(pts, self.support_vectors_, self.kernel_width_) @ self.dual_coef_ + self.intercept_

    def predict(self, X) -> np.ndarray:
        return np.where(self.decision_function(X) >= 0.0, 1, -1)

    def contains(self, X) -> np.ndarray:
        return self.predict(X) == 1

    def to_json(self) -> dict:
        return {
            "support_vectors": self.support_vectors_.tolist(),
            "dual_coef": self.dual_coef_.tolist(),
            "intercept": self.intercept_,
            "nu": self.kernel_width_,
            "C": self.C,
        }

    @staticmethod
    def from_json(data: dict) -> "SvmSafeSet":
        out = SvmSafeSet(C=float(data["C"]), nu=float(data["nu"]))
        out.support_vectors_ = np.asarray(data["support_vectors"], dtype=float)
        out.dual_coef_ = np.asarray(data["dual_coef"], dtype=float)
        out.intercept_ = float(data["intercept"])
        out.kernel_width_ = float(data["nu"])
        return out


def fit_svm(points: LabeledInitialSet, C: float = 10.0, nu: float | None = None) -> SvmSafeSet:
    return SvmSafeSet(C=C, nu=nu).fit(points.X, points.y)


def svm_classify(s: SvmSafeSet, x) -> int:
    return int(s.predict(np.asarray(x, dtype=float).reshape(1, -1))[0])


# -- metrics -------------------------------------------------------------------


def _require_shared_points(a: LabeledInitialSet, b: LabeledInitialSet) -> None:
    if a.X.shape != b.X.shape or not np.allclose(a.X, b.X, atol=1e-12, rtol=0.0):
        raise PreconditionError("sets must share identical initial values")


def metric_m_dir(t_ctrl: LabeledInitialSet, t_exp: LabeledInitialSet) -> float:
    """Ratio of valid-trajectory counts between controller and oracle."""
    _require_shared_points(t_ctrl, t_exp)
    n_exp = int(np.sum(t_exp.y == 1))
    if n_exp == 0:
        raise EmptyPositiveReference("oracle produced no valid trajectory")
    return float(np.sum(t_ctrl.y == 1)) / n_exp


def metric_m_vol(safe_set, t_ctrl: LabeledInitialSet, t_exp: LabeledInitialSet) -> float:
    """Share of the oracle's valid initial states that the safe set keeps."""
    _require_shared_points(t_ctrl, t_exp)
    exp_pos = t_exp.y == 1
    denom = int(np.sum(exp_pos))
    if denom == 0:
        raise EmptyDenominator("oracle produced no valid trajectory")
    inside = np.asarray(safe_set.contains(t_ctrl.X))
    return float(np.sum(inside & exp_pos)) / denom


def metric_m_fp(safe_set, v: LabeledInitialSet) -> float:
    """Proportion of unsafe initial states among those the set accepts."""
    inside = np.asarray(safe_set.contains(v.X))
    denom = int(np.sum(inside))
    if denom == 0:
        raise EmptyDenominator("the safe set contains no validation point")
    return float(np.sum(inside & (v.y == -1))) / denom


def empirical_risk(n_plus: int, n_s: int) -> float:
    if n_s < 1:
        raise PreconditionError("need at least one point inside the safe set")
    return n_plus / n_s


def hoeffding(n_s: int, delta: float) -> float:
    """Confidence that the empirical safety rate is delta-accurate."""
    if n_s < 1:
        raise PreconditionError("sample count must be >= 1")
    if not 0.0 < delta < 1.0:
        raise PreconditionError("delta must lie in (0, 1)")
    return 1.0 - 2.0 * math.exp(-2.0 * n_s * delta**2)
