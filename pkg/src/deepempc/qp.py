"""Dense convex quadratic programming by a primal active-set method.

Problems are stated as

    minimize    z' H z + q' z
    subject to  Aineq z <= bineq

(note the missing 1/2: the gradient is 2 H z + q). The active-set
iteration keeps a feasible iterate and a working set of constraint rows
treated as equalities; each subproblem is solved through a Cholesky
factorization of 2H and a Schur complement in the working rows. A
phase-1 linear program (minimize the largest violation) produces the
initial feasible point and doubles as the infeasibility certificate.

Exact active sets at the optimum are what the explicit-MPC enumeration
downstream consumes, which is why this solver exists instead of a
general-purpose NLP wrapper.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import (
    DimensionMismatch,
    MaxIterations,
    NonConvex,
    NumericalError,
    QpInfeasible,
)
from .linalg import cholesky_factor
from .validation import as_matrix, as_vector, check_symmetric

REGULARIZATION = 1e-10
CURVATURE_TOL = -1e-8
STEP_TOL = 1e-11
DUAL_TOL = 1e-9


@dataclass(frozen=True)
class QpProblem:
    """Data of one inequality-constrained convex QP."""

    H: np.ndarray
    q: np.ndarray
    Aineq: np.ndarray
    bineq: np.ndarray

    def __post_init__(self):
        H = check_symmetric(self.H, "H")
        q = as_vector(self.q, "q", size=H.shape[0])
        A = as_matrix(self.Aineq, "Aineq") if np.size(self.Aineq) else np.zeros((0, H.shape[0]))
        if A.shape[1] != H.shape[0]:
            raise DimensionMismatch("Aineq column count must match H")
        b = as_vector(self.bineq, "bineq", size=A.shape[0]) if A.shape[0] else np.zeros(0)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "Aineq", A)
        object.__setattr__(self, "bineq", b)

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def m(self) -> int:
        return self.Aineq.shape[0]

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(z @ self.H @ z + self.q @ z)


@dataclass(frozen=True)
class QpSolution:
    z: np.ndarray
    duals: np.ndarray
    status: str
    kkt_residual: float
    iterations: int
    regularized: bool
    active_set: tuple[int, ...]

    def objective(self, p: QpProblem) -> float:
        return p.objective(self.z)


def check_kkt(p: QpProblem, z, duals) -> float:
    """Largest violation among stationarity, feasibility, dual sign and
    complementary slackness."""
    zv = as_vector(z, "z", size=p.n)
    lam = as_vector(duals, "duals", size=p.m)
    grad = 2.0 * p.H @ zv + p.q
    if p.m:
        grad = grad + p.Aineq.T @ lam
        slack = p.Aineq @ zv - p.bineq
        primal = max(0.0, float(np.max(slack)))
        dual_neg = max(0.0, float(-np.min(lam)))
        comp = float(np.max(np.abs(lam * slack)))
    else:
        primal = dual_neg = comp = 0.0
    return max(float(np.max(np.abs(grad))), primal, dual_neg, comp)


def _phase1(p: QpProblem, tol: float) -> np.ndarray:
    """Feasible point via the LP  min s  s.t.  A z - s <= b, s >= 0."""
    cost = np.zeros(p.n + 1)
    cost[-1] = 1.0
    a_ub = np.hstack([p.Aineq, -np.ones((p.m, 1))])
    bounds = [(None, None)] * p.n + [(0.0, None)]
    res = linprog(cost, A_ub=a_ub, b_ub=p.bineq, bounds=bounds, method="highs")
    if not res.success:
        raise NumericalError(f"phase-1 LP failed: {res.message}")
    if res.fun > tol:
        raise QpInfeasible(f"minimal constraint violation {res.fun:.3e} exceeds {tol:.0e}")
    return res.x[: p.n]


def _eqp_solve(chol, A_w: np.ndarray, grad: np.ndarray, resid_w: np.ndarray):
    """Direction and multipliers of the equality-constrained subproblem.

    Solves 2H d + A_w' lam = -grad, A_w d = resid_w through the Schur
    complement S = A_w (2H)^{-1} A_w'.
    """

    def solve_spd(rhs):
        return np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))

    h = solve_spd(grad)
    if A_w.shape[0] == 0:
        return -h, np.zeros(0)
    y = solve_spd(A_w.T)
    schur = A_w @ y
    try:
        lam = np.linalg.solve(schur, -(resid_w + A_w @ h))
    except np.linalg.LinAlgError:
        # dependent working rows (possible only from degenerate zero steps)
        lam = np.linalg.lstsq(schur, -(resid_w + A_w @ h), rcond=None)[0]
    return -h - y @ lam, lam


def solve_qp(p: QpProblem, tol: float = 1e-8, max_iter: int | None = None) -> QpSolution:
    """Solve the QP to stationarity/feasibility/complementarity <= tol."""
    if max_iter is None:
        max_iter = 50 * (p.n + p.m)
    eigs = np.linalg.eigvalsh(p.H)
    if eigs[0] < CURVATURE_TOL:
        raise NonConvex(f"H has curvature {eigs[0]:.3e}")
    regularized = bool(eigs[0] < REGULARIZATION)
    H2 = 2.0 * (p.H + REGULARIZATION * np.eye(p.n) if regularized else p.H)
    chol = cholesky_factor(H2)

    if p.m == 0:
        z = np.linalg.solve(chol.T, np.linalg.solve(chol, -p.q))
        duals = np.zeros(0)
        return QpSolution(z, duals, "optimal", check_kkt(p, z, duals), 0, regularized, ())

    if np.all(p.bineq >= 0.0):
        z = np.zeros(p.n)
    else:
        z = _phase1(p, tol)

    working: list[int] = []
    for iteration in range(1, max_iter + 1):
        A_w = p.Aineq[working]
        resid_w = p.bineq[working] - A_w @ z
        grad = H2 @ z + p.q
        direction, lam_w = _eqp_solve(chol, A_w, grad, resid_w)

        if np.max(np.abs(direction)) <= STEP_TOL * (1.0 + np.max(np.abs(z))):
            if lam_w.size == 0 or np.min(lam_w) >= -DUAL_TOL:
                duals = np.zeros(p.m)
                duals[working] = lam_w
                return QpSolution(
                    z, duals, "optimal", check_kkt(p, z, duals),
                    iteration, regularized, tuple(sorted(working)),
                )
            # release the most negative multiplier, lowest row index on ties
            worst = int(np.argmin(lam_w))
            working.pop(worst)
            continue

        outside = np.array([i for i in range(p.m) if i not in working], dtype=int)
        denom = p.Aineq[outside] @ direction
        blocking = outside[denom > 1e-12]
        alpha = 1.0
        block = -1
        if blocking.size:
            slack = np.maximum(p.bineq[blocking] - p.Aineq[blocking] @ z, 0.0)
            ratios = slack / (p.Aineq[blocking] @ direction)
            best = int(np.argmin(ratios))
            if ratios[best] < alpha:
                alpha = float(ratios[best])
                block = int(blocking[best])
        z = z + alpha * direction
        if block >= 0:
            working.append(block)
            working.sort()
    raise MaxIterations(f"active-set method exceeded {max_iter} iterations")
