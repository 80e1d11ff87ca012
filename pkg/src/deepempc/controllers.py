"""Uniform controller interface over the implicit QP law, explicit PWA
laws, networks, polynomials and their saturated/projected variants.

Every controller maps a single state via ``controller(x)`` and a batch
of states via ``predict(X)``; ``predict_with_mask(X)`` additionally
reports which rows succeeded, which is what the statistical
verification pipeline consumes. ``total`` advertises that the
controller is defined everywhere (so batches never fail).
"""

from __future__ import annotations

import numpy as np

from .dynamics import LtiSystem
from .errors import ControllerInfeasible, OutsidePartition, QpInfeasible
from .geometry import Polytope, box_bounds_of
from .learn import Polynomial, poly_eval_batch, project_feasible
from .mpc import CondensedMpc, mpc_control
from .pwa import PwaFunction
from .relunet import ExactRepresentation, ReluNetwork
from .validation import as_samples


class BaseController:
    total = False
    n_u: int

    def __call__(self, x) -> np.ndarray:
        u, ok = self.predict_with_mask(np.asarray(x, dtype=float).reshape(1, -1))
        if not ok[0]:
            raise ControllerInfeasible(0, "controller undefined at the queried state")
        return u[0]

    def predict(self, X) -> np.ndarray:
        u, ok = self.predict_with_mask(X)
        if not np.all(ok):
            raise ControllerInfeasible(0, "controller undefined at some queried state")
        return u

    def predict_with_mask(self, X):  # pragma: no cover - abstract
        raise NotImplementedError


class ImplicitMpcController(BaseController):
    """Solves the condensed QP at every query state."""

    def __init__(self, condensed: CondensedMpc, tol: float = 1e-8):
        self.condensed = condensed
        self.tol = tol
        self.n_u = condensed.n_u

    def predict_with_mask(self, X):
        pts = as_samples(X, "X", n_features=self.condensed.n_x)
        out = np.zeros((pts.shape[0], self.n_u))
        ok = np.ones(pts.shape[0], dtype=bool)
        for i, x in enumerate(pts):
            try:
                out[i] = mpc_control(self.condensed, x, tol=self.tol)
            except QpInfeasible:
                ok[i] = False
        return out, ok


class ExplicitMpcController(BaseController):
    """Point location in an explicit PWA law."""

    def __init__(self, law: PwaFunction):
        self.law = law
        self.n_u = law.n_u

    def predict_with_mask(self, X):
        return self.law.eval_batch(X)

    def __call__(self, x) -> np.ndarray:
        try:
            return self.law(x)
        except OutsidePartition as exc:
            raise ControllerInfeasible(0, str(exc)) from exc


class NetworkController(BaseController):
    total = True

    def __init__(self, net: ReluNetwork):
        self.net = net
        self.n_u = net.n_u

    def predict_with_mask(self, X):
        u = self.net.eval_batch(X)
        return u, np.ones(u.shape[0], dtype=bool)


class ExactRepController(BaseController):
    total = True

    def __init__(self, rep: ExactRepresentation):
        self.rep = rep
        self.n_u = rep.n_u

    def predict_with_mask(self, X):
        u = self.rep.eval_batch(X)
        return u, np.ones(u.shape[0], dtype=bool)


class PolynomialController(BaseController):
    total = True

    def __init__(self, poly: Polynomial):
        self.poly = poly
        self.n_u = poly.n_u

    def predict_with_mask(self, X):
        u = poly_eval_batch(self.poly, X)
        return u, np.ones(u.shape[0], dtype=bool)


class SaturatedController(BaseController):
    """Feasibility recovery wrapper: clamp (box inputs) or projection QP."""

    def __init__(self, inner: BaseController, sys: LtiSystem, U: Polytope,
                 Cinv: Polytope | None = None):
        self.inner = inner
        self.sys = sys
        self.U = U
        self.Cinv = Cinv
        self.n_u = inner.n_u
        self._box = box_bounds_of(U) if Cinv is None else None

    @property
    def total(self):
        return self.inner.total

    def predict_with_mask(self, X):
        pts = as_samples(X, "X")
        raw, ok = self.inner.predict_with_mask(pts)
        if self._box is not None:
            return np.clip(raw, self._box[0], self._box[1]), ok
        out = raw.copy()
        for i in np.nonzero(ok)[0]:
            try:
                out[i] = project_feasible(raw[i], pts[i], self.sys, self.U, self.Cinv)
            except Exception:
                ok[i] = False
        return out, ok
