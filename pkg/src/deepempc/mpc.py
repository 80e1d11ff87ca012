"""Condensing of the finite-horizon optimal control problem into a dense
QP in the stacked input sequence, the implicit MPC control law, and
labeled training-data generation.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .dynamics import Scenario
from .errors import PreconditionError, QpInfeasible, SamplingExhausted
from .qp import QpProblem, solve_qp
from .validation import as_vector

MAX_TOTAL_DRAWS = 10**6
MIN_ACCEPT_RATE = 1e-3


@dataclass(frozen=True)
class CondensedMpc:
    """Dense form of the horizon-N control problem.

    Cost over input sequence v given parameter state x:
        v' F v + x' G v + x' H x
    subject to C_c v <= T x + c_c. The first n_u entries of the
    minimizer are the control applied to the plant.
    """

    F: np.ndarray
    G: np.ndarray
    H: np.ndarray
    C_c: np.ndarray
    T: np.ndarray
    c_c: np.ndarray
    n_x: int
    n_u: int
    N: int

    @property
    def n_vars(self) -> int:
        return self.N * self.n_u

    @property
    def n_rows(self) -> int:
        return self.C_c.shape[0]

    def objective(self, x, v) -> float:
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        return float(v @ self.F @ v + x @ self.G @ v + x @ self.H @ x)

    def qp_at(self, x) -> QpProblem:
        xv = as_vector(x, "x", size=self.n_x)
        return QpProblem(self.F, self.G.T @ xv, self.C_c, self.T @ xv + self.c_c)


def condense(s: Scenario) -> CondensedMpc:
    """Eliminate the states from the horizon-N problem.

    Predicted states are x_k = A^k x + sum_j A^(k-1-j) B u_j. State
    constraints are imposed on every predicted state x_1..x_N (the
    current state is the problem parameter, not a decision), the
    terminal set adds extra rows at step N, and input constraints apply
    at steps 0..N-1.
    """
    A, B = s.system.A, s.system.B
    n_x, n_u, N = s.n_x, s.n_u, s.N

    powers = [np.eye(n_x)]
    for _ in range(N):
        powers.append(A @ powers[-1])
    # reach[k] maps the stacked inputs to x_k
    reach = []
    for k in range(N + 1):
        blocks = [powers[k - 1 - j] @ B if j < k else np.zeros((n_x, n_u)) for j in range(N)]
        reach.append(np.hstack(blocks))

    F = np.kron(np.eye(N), s.R)
    G = np.zeros((n_x, N * n_u))
    Hc = s.Q.copy()
    for k in range(1, N):
        F += reach[k].T @ s.Q @ reach[k]
        G += 2.0 * powers[k].T @ s.Q @ reach[k]
        Hc += powers[k].T @ s.Q @ powers[k]
    F += reach[N].T @ s.P @ reach[N]
    G += 2.0 * powers[N].T @ s.P @ reach[N]
    Hc += powers[N].T @ s.P @ powers[N]
    F = 0.5 * (F + F.T)

    rows_C, rows_T, rows_c = [], [], []
    for k in range(1, N + 1):
        rows_C.append(s.X.C @ reach[k])
        rows_T.append(-s.X.C @ powers[k])
        rows_c.append(s.X.c)
        if k == N and s.Xf is not None:
            rows_C.append(s.Xf.C @ reach[N])
            rows_T.append(-s.Xf.C @ powers[N])
            rows_c.append(s.Xf.c)
    for k in range(N):
        block = np.zeros((s.U.C.shape[0], N * n_u))
        block[:, k * n_u : (k + 1) * n_u] = s.U.C
        rows_C.append(block)
        rows_T.append(np.zeros((s.U.C.shape[0], n_x)))
        rows_c.append(s.U.c)

    return CondensedMpc(
        F=F,
        G=G,
        H=0.5 * (Hc + Hc.T),
        C_c=np.vstack(rows_C),
        T=np.vstack(rows_T),
        c_c=np.concatenate(rows_c),
        n_x=n_x,
        n_u=n_u,
        N=N,
    )


def mpc_control(m: CondensedMpc, x, tol: float = 1e-8) -> np.ndarray:
    """First input of the optimal sequence at the given state.

    Raises QpInfeasible outside the feasibility region.
    """
    sol = solve_qp(m.qp_at(x), tol=tol)
    return sol.z[: m.n_u]


def mpc_sequence(m: CondensedMpc, x, tol: float = 1e-8) -> np.ndarray:
    """Full optimal input sequence at the given state."""
    return solve_qp(m.qp_at(x), tol=tol).z


@dataclass(frozen=True)
class Dataset:
    """Labeled training pairs (state, first optimal input)."""

    X: np.ndarray
    U: np.ndarray
    seed: int
    fingerprint: str

    def __post_init__(self):
        if self.X.shape[0] != self.U.shape[0]:
            raise PreconditionError("X and U row counts differ")

    def __len__(self) -> int:
        return self.X.shape[0]


def scenario_fingerprint(s: Scenario) -> str:
    payload = json.dumps(s.to_json(), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


def generate_dataset(m: CondensedMpc, n_tr: int, seed: int, box, fingerprint: str = "") -> Dataset:
    """Draw n_tr feasible states uniformly from the box and label each
    with the implicit-MPC input.

    Each index gets its own random stream, so the i-th pair does not
    depend on how many draws the other indices rejected.
    """
    if n_tr < 1:
        raise PreconditionError("n_tr must be >= 1")
    X = np.empty((n_tr, m.n_x))
    U = np.empty((n_tr, m.n_u))
    total_draws = 0
    accepted = 0
    for i in range(n_tr):
        rng = np.random.default_rng([seed, 17, i])
        while True:
            total_draws += 1
            if total_draws >= MAX_TOTAL_DRAWS and accepted < MIN_ACCEPT_RATE * total_draws:
                raise SamplingExhausted(
                    f"acceptance rate {accepted}/{total_draws} below {MIN_ACCEPT_RATE:.1%}"
                )
            x = box.sample(rng, 1)[0]
            try:
                u = mpc_control(m, x)
            except QpInfeasible:
                continue
            X[i] = x
            U[i] = u
            accepted += 1
            break
    return Dataset(X=X, U=U, seed=seed, fingerprint=fingerprint)


def save_dataset_csv(ds: Dataset, path) -> None:
    n_x, n_u = ds.X.shape[1], ds.U.shape[1]
    header = [f"x{i}" for i in range(n_x)] + [f"u{i}" for i in range(n_u)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for x, u in zip(ds.X, ds.U):
            writer.writerow([f"{v:.17g}" for v in np.concatenate([x, u])])


def load_dataset_csv(path, n_x: int, seed: int = 0, fingerprint: str = "") -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = np.array([[float(v) for v in row] for row in reader])
    if len(header) <= n_x:
        raise PreconditionError("csv has no input columns")
    return Dataset(X=rows[:, :n_x], U=rows[:, n_x:], seed=seed, fingerprint=fingerprint)
