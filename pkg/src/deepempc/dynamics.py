"""Discrete LTI systems, benchmark scenarios, closed-loop rollout and
settling-time metrics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_discrete_are

from .errors import (
    ControllerInfeasible,
    DimensionMismatch,
    EmptySet,
    PreconditionError,
    UnknownScenario,
)
from .geometry import Box, Polytope, symmetric_box
from .validation import as_matrix, as_vector, check_min_eigenvalue


@dataclass(frozen=True)
class LtiSystem:
    """x+ = A x + B u."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        if A.shape[0] != A.shape[1]:
            raise DimensionMismatch("A must be square")
        B = as_matrix(self.B, "B", shape=(A.shape[0], None))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]


def step(sys: LtiSystem, x, u) -> np.ndarray:
    """One forward step of the dynamics."""
    xv = as_vector(x, "x", size=sys.n_x)
    uv = as_vector(u, "u", size=sys.n_u)
    return sys.A @ xv + sys.B @ uv


@dataclass(frozen=True)
class Trajectory:
    """States x_0..x_K and the inputs u_0..u_{K-1} that produced them."""

    states: np.ndarray
    inputs: np.ndarray

    def __post_init__(self):
        states = as_matrix(self.states, "states")
        inputs = np.asarray(self.inputs, dtype=float)
        if inputs.ndim == 1:
            inputs = inputs.reshape(-1, 1) if inputs.size else inputs.reshape(0, 1)
        if states.shape[0] != inputs.shape[0] + 1:
            raise DimensionMismatch(
                f"{states.shape[0]} states need {states.shape[0] - 1} inputs, got {inputs.shape[0]}"
            )
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "inputs", inputs)

    def __len__(self) -> int:
        return self.inputs.shape[0]


@dataclass(frozen=True)
class Scenario:
    """A control benchmark: plant, weights, horizon and constraint sets."""

    system: LtiSystem
    Q: np.ndarray
    R: np.ndarray
    P: np.ndarray
    N: int
    X: Polytope
    U: Polytope
    Xf: Polytope | None = None
    sample_box: Box | None = None
    settle_tol: float = 1e-2
    k_end: int = 50

    def __post_init__(self):
        n_x, n_u = self.system.n_x, self.system.n_u
        Q = check_min_eigenvalue(as_matrix(self.Q, "Q", shape=(n_x, n_x)), -1e-10, "Q")
        P = check_min_eigenvalue(as_matrix(self.P, "P", shape=(n_x, n_x)), -1e-10, "P")
        R = check_min_eigenvalue(as_matrix(self.R, "R", shape=(n_u, n_u)), 1e-10, "R")
        if self.N < 1:
            raise PreconditionError("horizon N must be >= 1")
        if self.X.dim != n_x or self.U.dim != n_u:
            raise DimensionMismatch("constraint sets do not match system dimensions")
        if self.Xf is not None and self.Xf.dim != n_x:
            raise DimensionMismatch("terminal set dimension mismatch")
        if self.settle_tol <= 0:
            raise PreconditionError("settle_tol must be positive")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "P", P)
        if self.sample_box is None:
            bounds = _state_box_from(self.X)
            object.__setattr__(self, "sample_box", bounds)
        if self.sample_box.dim != n_x:
            raise DimensionMismatch("sample_box dimension mismatch")

    @property
    def n_x(self) -> int:
        return self.system.n_x

    @property
    def n_u(self) -> int:
        return self.system.n_u

    def to_json(self) -> dict:
        return {
            "A": self.system.A.tolist(),
            "B": self.system.B.tolist(),
            "Q": self.Q.tolist(),
            "R": self.R.tolist(),
            "P": self.P.tolist(),
            "N": self.N,
            "X": self.X.to_json(),
            "U": self.U.to_json(),
            "Xf": None if self.Xf is None else self.Xf.to_json(),
            "sample_box": self.sample_box.to_json(),
            "settle_tol": self.settle_tol,
            "k_end": self.k_end,
        }

    @staticmethod
    def from_json(data: dict) -> "Scenario":
        return Scenario(
            system=LtiSystem(np.asarray(data["A"], float), np.asarray(data["B"], float)),
            Q=np.asarray(data["Q"], float),
            R=np.asarray(data["R"], float),
            P=np.asarray(data["P"], float),
            N=int(data["N"]),
            X=Polytope.from_json(data["X"]),
            U=Polytope.from_json(data["U"]),
            Xf=None if data.get("Xf") is None else Polytope.from_json(data["Xf"]),
            sample_box=None if data.get("sample_box") is None else Box.from_json(data["sample_box"]),
            settle_tol=float(data.get("settle_tol", 1e-2)),
            k_end=int(data.get("k_end", 50)),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, sort_keys=True, indent=2)
            fh.write("\n")

    @staticmethod
    def load(path) -> "Scenario":
        with open(path) as fh:
            return Scenario.from_json(json.load(fh))


def _state_box_from(X: Polytope) -> Box:
    from .geometry import box_bounds_of

    bounds = box_bounds_of(X)
    if bounds is None or not np.all(np.isfinite(bounds[0])) or not np.all(np.isfinite(bounds[1])):
        raise PreconditionError(
            "state constraint set is not a bounded box; pass sample_box explicitly"
        )
    return Box(bounds[0], bounds[1])


def rollout(sys: LtiSystem, controller, x0, k_end: int) -> Trajectory:
    """Simulate k_end closed-loop steps.

    ``controller`` maps a state vector to an input vector and may raise
    to signal it is undefined at the current state; the failure is
    re-raised as ControllerInfeasible carrying the step index.
    """
    x = as_vector(x0, "x0", size=sys.n_x)
    states = np.empty((k_end + 1, sys.n_x))
    inputs = np.empty((k_end, sys.n_u))
    states[0] = x
    for k in range(k_end):
        try:
            u = as_vector(controller(x), "u", size=sys.n_u)
        except ControllerInfeasible:
            raise
        except Exception as exc:
            raise ControllerInfeasible(k, f"controller failed at step {k}: {exc}") from exc
        inputs[k] = u
        x = sys.A @ x + sys.B @ u
        states[k + 1] = x
    return Trajectory(states, inputs)


def settling_time(traj: Trajectory, tol: float) -> int | None:
    """Smallest k with ||x_j||_inf <= tol for every j >= k, None if never."""
    if tol <= 0:
        raise PreconditionError("tol must be positive")
    norms = np.max(np.abs(traj.states), axis=1)
    under = norms <= tol
    if not under[-1]:
        return None
    # last index where the bound is exceeded, settle right after it
    over = np.nonzero(~under)[0]
    return 0 if over.size == 0 else int(over[-1] + 1)


def average_settling_time(trajs, tol: float) -> float:
    """Mean settling time; an unsettled trajectory counts its full length."""
    trajs = list(trajs)
    if not trajs:
        raise EmptySet("need at least one trajectory")
    total = 0.0
    for traj in trajs:
        st = settling_time(traj, tol)
        total += len(traj) if st is None else st
    return total / len(trajs)


def relative_ast(ast: float, ast_reference: float) -> float:
    if ast_reference <= 0:
        raise PreconditionError("reference AST must be positive")
    return ast / ast_reference


# -- benchmark scenarios ------------------------------------------------------

_OSCILLATOR_A = np.array([[0.5403, 0.8415], [0.8415, 0.5403]])
_OSCILLATOR_B = np.array([[-0.4597], [0.8415]])

_OSC_MASSES_A = np.array(
    [
        [0.763, 0.460, 0.115, 0.020],
        [-0.899, 0.763, 0.420, 0.115],
        [0.115, 0.020, 0.763, 0.460],
        [0.420, 0.115, -0.899, 0.763],
    ]
)
_OSC_MASSES_B = np.array([[0.014], [0.063], [0.221], [0.367]])

_PENDULUM_A = np.array(
    [
        [1.0, 0.1, 0.0, 0.0],
        [0.0, 0.9818, 0.2673, 0.0],
        [0.0, 0.0, 1.0, 0.1],
        [0.0, -0.0455, 3.1182, 1.0],
    ]
)
_PENDULUM_B = np.array([[0.0], [0.1818], [0.0], [0.4546]])


def builtin_scenario(name: str, **overrides) -> Scenario:
    """Construct one of the bundled benchmarks.

    Weight matrices for "oscillating_masses" and "inverted_pendulum"
    default to Q = I, R = 0.1 I and P from the discrete-time Riccati
    equation; pass Q=, R=, P= (or any other Scenario field) to override.
    """
    if name == "oscillator":
        sys = LtiSystem(_OSCILLATOR_A, _OSCILLATOR_B)
        params = dict(
            system=sys,
            Q=2.0 * np.eye(2),
            R=np.array([[1.0]]),
            P=np.zeros((2, 2)),
            N=1,
            X=symmetric_box([1.0, 1.0]).to_polytope(),
            U=symmetric_box([1.0]).to_polytope(),
            sample_box=symmetric_box([1.0, 1.0]),
            # the horizon-1 law is myopic; over longer windows almost no
            # initial state stays feasible and safety labels degenerate
            k_end=10,
        )
    elif name == "oscillating_masses":
        sys = LtiSystem(_OSC_MASSES_A, _OSC_MASSES_B)
        q = overrides.pop("Q", np.eye(4))
        r = overrides.pop("R", 0.1 * np.eye(1))
        p = overrides.pop("P", solve_discrete_are(sys.A, sys.B, np.asarray(q, float), np.asarray(r, float)))
        params = dict(
            system=sys,
            Q=q,
            R=r,
            P=p,
            N=7,
            X=symmetric_box([4.0, 10.0, 4.0, 10.0]).to_polytope(),
            U=symmetric_box([0.5]).to_polytope(),
            # the weak actuator makes most high-velocity states infeasible
            # over the horizon; draw from the half box so rollouts settle
            # well inside k_end
            sample_box=symmetric_box([2.0, 5.0, 2.0, 5.0]),
            k_end=100,
        )
    elif name == "inverted_pendulum":
        sys = LtiSystem(_PENDULUM_A, _PENDULUM_B)
        q = overrides.pop("Q", np.eye(4))
        r = overrides.pop("R", 0.1 * np.eye(1))
        p = overrides.pop("P", solve_discrete_are(sys.A, sys.B, np.asarray(q, float), np.asarray(r, float)))
        params = dict(
            system=sys,
            Q=q,
            R=r,
            P=p,
            N=10,
            X=symmetric_box([1.0, 1.5, 0.35, 1.0]).to_polytope(),
            U=symmetric_box([1.0]).to_polytope(),
            sample_box=symmetric_box([1.0, 1.5, 0.35, 1.0]),
            k_end=60,
        )
    else:
        raise UnknownScenario(f"unknown scenario {name!r}")
    params.update(overrides)
    return Scenario(**params)
