"""Approximate controllers learned from implicit-MPC data: an MLP
regressor trained with Adam, a multivariate polynomial baseline, a
gain-refit of a coarse PWA partition, and the projection that recovers
feasibility of raw controller outputs.
"""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np
from sklearn.base import BaseEstimator

from .dynamics import LtiSystem
from .errors import (
    NonFiniteLoss,
    PreconditionError,
    PreconditionViolated,
    ProjectionInfeasible,
    QpInfeasible,
    RankDeficient,
)
from .geometry import Polytope, box_bounds_of
from .linalg import least_squares
from .pwa import PwaFunction, Region
from .qp import QpProblem, solve_qp
from .relunet import ReluNetwork
from .validation import as_samples


@dataclass(frozen=True)
class TrainConfig:
    M: int
    L: int
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 64
    epochs: int = 200
    seed: int = 0

    def __post_init__(self):
        if min(self.learning_rate, self.beta1, self.beta2, self.eps) <= 0:
            raise PreconditionError("rates must be positive")
        if self.M < 1 or self.L < 1 or self.batch_size < 1 or self.epochs < 1:
            raise PreconditionError("architecture and schedule must be positive")

    def to_json(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_json(data: dict) -> "TrainConfig":
        return TrainConfig(**data)


def _init_params(n_x: int, n_u: int, cfg: TrainConfig, rng: np.random.Generator):
    """Uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases."""
    dims = [n_x] + [cfg.M] * cfg.L + [n_u]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def mlp_forward(weights, biases, X: np.ndarray):
    """Forward pass keeping the post-activation of every layer."""
    acts = [X]
    for w, b in zip(weights[:-1], biases[:-1]):
        acts.append(np.maximum(0.0, acts[-1] @ w.T + b))
    out = acts[-1] @ weights[-1].T + biases[-1]
    return out, acts


def mlp_loss_and_grads(weights, biases, X: np.ndarray, U: np.ndarray):
    """Mean of squared output-error norms over the batch, with gradients."""
    n = X.shape[0]
    out, acts = mlp_forward(weights, biases, X)
    err = out - U
    loss = float(np.sum(err**2) / n)
    delta = 2.0 * err / n
    grads_w = [None] * len(weights)
    grads_b = [None] * len(biases)
    grads_w[-1] = delta.T @ acts[-1]
    grads_b[-1] = delta.sum(axis=0)
    for l in range(len(weights) - 2, -1, -1):
        delta = (delta @ weights[l + 1]) * (acts[l + 1] > 0.0)
        grads_w[l] = delta.T @ acts[l]
        grads_b[l] = delta.sum(axis=0)
    return loss, grads_w, grads_b


@dataclass(frozen=True)
class AdamState:
    m: tuple[np.ndarray, ...]
    v: tuple[np.ndarray, ...]
    t: int

    @staticmethod
    def zeros_like(params) -> "AdamState":
        return AdamState(
            m=tuple(np.zeros_like(p) for p in params),
            v=tuple(np.zeros_like(p) for p in params),
            t=0,
        )


def adam_update(params, grads, state: AdamState, cfg: TrainConfig):
    """One bias-corrected Adam step; pure function of its inputs."""
    t = state.t + 1
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m1 = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v1 = cfg.beta2 * v + (1.0 - cfg.beta2) * g**2
        m_hat = m1 / (1.0 - cfg.beta1**t)
        v_hat = v1 / (1.0 - cfg.beta2**t)
        new_params.append(p - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps))
        new_m.append(m1)
        new_v.append(v1)
    return new_params, AdamState(m=tuple(new_m), v=tuple(new_v), t=t)


@dataclass(frozen=True)
class TrainResult:
    net: ReluNetwork
    final_mse: float
    loss_history: np.ndarray


def train_mlp(X, U, cfg: TrainConfig) -> TrainResult:
    """Minimize the mean squared error with Adam over shuffled mini-batches.

    Fully deterministic for a fixed config: initialization and epoch
    shuffles come from seeded streams and batches accumulate in a fixed
    order. Raises NonFiniteLoss if the iteration diverges.
    """
    X = as_samples(X, "X")
    U = as_samples(U, "U")
    if X.shape[0] != U.shape[0] or X.shape[0] == 0:
        raise PreconditionError("X and U must be nonempty with matching rows")
    if cfg.M < X.shape[1]:
        raise PreconditionViolated(f"width {cfg.M} below input dimension {X.shape[1]}")
    n = X.shape[0]
    init_rng = np.random.default_rng([cfg.seed, 101])
    shuffle_rng = np.random.default_rng([cfg.seed, 202])
    weights, biases = _init_params(X.shape[1], U.shape[1], cfg, init_rng)
    params = weights + biases
    n_w = len(weights)
    state = AdamState.zeros_like(params)
    history = np.empty(cfg.epochs)
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, gw, gb = mlp_loss_and_grads(params[:n_w], params[n_w:], X[idx], U[idx])
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"training diverged at epoch {epoch} (batch loss {loss})")
            params, state = adam_update(params, gw + gb, state, cfg)
        epoch_loss, _, _ = mlp_loss_and_grads(params[:n_w], params[n_w:], X, U)
        if not np.isfinite(epoch_loss):
            raise NonFiniteLoss(f"training diverged at epoch {epoch}")
        history[epoch] = epoch_loss
    net = ReluNetwork(tuple(params[:n_w]), tuple(params[n_w:]))
    final_mse, _, _ = mlp_loss_and_grads(params[:n_w], params[n_w:], X, U)
    return TrainResult(net=net, final_mse=final_mse, loss_history=history)


class MlpRegressor(BaseEstimator):
    """Uniform-width ReLU network regressor trained with Adam.

    Follows the usual estimator conventions: hyperparameters in the
    constructor, fitted state in trailing-underscore attributes, and
    fit returns self.
    """

    def __init__(self, M=8, L=2, learning_rate=1e-3, beta1=0.9, beta2=0.999,
                 eps=1e-8, batch_size=64, epochs=200, seed=0):
        self.M = M
        self.L = L
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(
            M=self.M, L=self.L, learning_rate=self.learning_rate, beta1=self.beta1,
            beta2=self.beta2, eps=self.eps, batch_size=self.batch_size,
            epochs=self.epochs, seed=self.seed,
        )

    def fit(self, X, y):
        result = train_mlp(X, y, self._config())
        self.network_ = result.net
        self.final_mse_ = result.final_mse
        self.loss_history_ = result.loss_history
        return self

    def predict(self, X):
        return self.network_.eval_batch(X)


# -- polynomial baseline -------------------------------------------------------


@dataclass(frozen=True)
class Polynomial:
    """Full tensor basis of per-coordinate degrees 0..p for every output."""

    degree: int
    n_x: int
    coefficients: np.ndarray  # (n_u, (degree+1)**n_x)

    def __post_init__(self):
        coeffs = np.asarray(self.coefficients, dtype=float)
        if coeffs.ndim != 2 or coeffs.shape[1] != (self.degree + 1) ** self.n_x:
            raise PreconditionError("coefficient count must be n_u * (p+1)^n_x")
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def n_u(self) -> int:
        return self.coefficients.shape[0]

    def to_json(self) -> dict:
        return {
            "degree": self.degree,
            "n_x": self.n_x,
            "coefficients": self.coefficients.tolist(),
        }

    @staticmethod
    def from_json(data: dict) -> "Polynomial":
        return Polynomial(int(data["degree"]), int(data["n_x"]),
                          np.asarray(data["coefficients"], float))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, sort_keys=True, indent=2)
            fh.write("\n")

    @staticmethod
    def load(path) -> "Polynomial":
        with open(path) as fh:
            return Polynomial.from_json(json.load(fh))


def monomial_exponents(n_x: int, degree: int) -> list[tuple[int, ...]]:
    return list(itertools.product(range(degree + 1), repeat=n_x))


def monomial_design(X: np.ndarray, degree: int) -> np.ndarray:
    X = as_samples(X, "X")
    cols = [np.prod(X**np.asarray(exp, dtype=float), axis=1)
            for exp in monomial_exponents(X.shape[1], degree)]
    return np.column_stack(cols)


def fit_polynomial(X, U, degree: int) -> Polynomial:
    """Least-squares fit of the full monomial basis, one output at a time."""
    X = as_samples(X, "X")
    U = as_samples(U, "U")
    n_terms = (degree + 1) ** X.shape[1]
    if X.shape[0] < n_terms:
        raise RankDeficient(f"{X.shape[0]} samples cannot determine {n_terms} coefficients")
    design = monomial_design(X, degree)
    coeffs = np.vstack([least_squares(design, U[:, j]) for j in range(U.shape[1])])
    return Polynomial(degree=degree, n_x=X.shape[1], coefficients=coeffs)


def poly_eval(poly: Polynomial, x) -> np.ndarray:
    return poly_eval_batch(poly, np.asarray(x, dtype=float).reshape(1, -1))[0]


def poly_eval_batch(poly: Polynomial, X) -> np.ndarray:
    return monomial_design(as_samples(X, "X", n_features=poly.n_x), poly.degree) @ poly.coefficients.T


def memory_footprint_poly(poly_or_n_u, alpha_bit: int = 8, n_x: int | None = None,
                          degree: int | None = None) -> int:
    if isinstance(poly_or_n_u, Polynomial):
        n_u, n_x, degree = poly_or_n_u.n_u, poly_or_n_u.n_x, poly_or_n_u.degree
    else:
        n_u = int(poly_or_n_u)
    return alpha_bit * n_u * (degree + 1) ** n_x


class PolynomialRegressor(BaseEstimator):
    """Estimator wrapper around the tensor-basis polynomial fit."""

    def __init__(self, degree=3):
        self.degree = degree

    def fit(self, X, y):
        self.polynomial_ = fit_polynomial(X, y, self.degree)
        return self

    def predict(self, X):
        return poly_eval_batch(self.polynomial_, X)


# -- gain refit of a coarse partition -----------------------------------------


def fit_pwa_gains(partition: PwaFunction, X, U) -> PwaFunction:
    """Re-estimate the affine gains of every region from the data points
    located in it.

    Regions holding fewer points than an affine fit needs keep their
    original gains (with a warning), so the refit law stays total.
    """
    X = as_samples(X, "X", n_features=partition.n_x)
    U = as_samples(U, "U", n_features=partition.n_u)
    if X.shape[0] != U.shape[0]:
        raise PreconditionError("X and U row counts differ")

    assignment = np.full(X.shape[0], -1, dtype=int)
    todo = np.ones(X.shape[0], dtype=bool)
    for idx, region in enumerate(partition.regions):
        hit = todo & region.contains(X)
        assignment[hit] = idx
        todo[hit] = False

    regions = []
    starved = []
    for idx, region in enumerate(partition.regions):
        pts = assignment == idx
        n_pts = int(np.sum(pts))
        if n_pts < partition.n_x + 1:
            starved.append(idx)
            regions.append(region)
            continue
        design = np.hstack([X[pts], np.ones((n_pts, 1))])
        try:
            fitted = np.vstack([least_squares(design, U[pts, j]) for j in range(partition.n_u)])
        except RankDeficient:
            starved.append(idx)
            regions.append(region)
            continue
        regions.append(Region(Z=region.Z, z=region.z, K=fitted[:, :-1], g=fitted[:, -1]))
    if starved:
        warnings.warn(
            f"{len(starved)} regions kept their original gains (too few samples)",
            RuntimeWarning,
        )
    return PwaFunction(regions, partition.n_x, partition.n_u)


class PwaRefitRegressor(BaseEstimator):
    """Estimator wrapper: refit the gains of a fixed partition."""

    def __init__(self, partition: PwaFunction = None):
        self.partition = partition

    def fit(self, X, y):
        if self.partition is None:
            raise PreconditionError("a partition is required")
        self.law_ = fit_pwa_gains(self.partition, X, y)
        return self

    def predict(self, X):
        values, located = self.law_.eval_batch(X)
        if not np.all(located):
            raise PreconditionError("some query points lie outside the partition")
        return values


# -- feasibility recovery ------------------------------------------------------


def project_feasible(u_raw, x, sys: LtiSystem, U: Polytope,
                     Cinv: Polytope | None = None) -> np.ndarray:
    """Closest admissible input to u_raw.

    Without an invariance set and with box input constraints this is a
    componentwise clamp; otherwise the orthogonal projection QP
        min ||u - u_raw||^2  s.t.  C_u u <= c_u, C_inv(A x + B u) <= c_inv
    is solved. Raises ProjectionInfeasible when no admissible input
    exists at this state.
    """
    u_raw = np.asarray(u_raw, dtype=float).reshape(-1)
    if Cinv is None:
        bounds = box_bounds_of(U)
        if bounds is not None:
            return np.clip(u_raw, bounds[0], bounds[1])
        rows, rhs = U.C, U.c
    else:
        xv = np.asarray(x, dtype=float).reshape(-1)
        if Cinv.violation(xv) > 1e-9:
            raise ProjectionInfeasible("current state outside the invariant set")
        rows = np.vstack([U.C, Cinv.C @ sys.B])
        rhs = np.concatenate([U.c, Cinv.c - Cinv.C @ sys.A @ xv])
    problem = QpProblem(np.eye(u_raw.size), -2.0 * u_raw, rows, rhs)
    try:
        sol = solve_qp(problem)
    except QpInfeasible as exc:
        raise ProjectionInfeasible(str(exc)) from exc
    return sol.z
