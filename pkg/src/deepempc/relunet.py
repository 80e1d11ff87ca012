"""Feed-forward ReLU networks: evaluation, memory accounting, the region
lower bound, a constructor computing an exact maximum of affine pieces,
and the assembly that represents a PWA control law exactly with pairs
of such networks.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .errors import (
    DimensionMismatch,
    EmptyPieces,
    PreconditionError,
    PreconditionViolated,
)
from .geometry import Box
from .pwa import AffineTransform, ConvexPwa, PwaFunction, dc_decompose, normalize_domain
from .validation import as_samples, as_vector


@dataclass(frozen=True)
class ReluNetwork:
    """Uniform-width network: L hidden ReLU layers of width M, affine output.

    weights[0] is (M, n_x), weights[1..L-1] are (M, M), weights[L] is
    (n_u, M); biases match.
    """

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        ws = tuple(np.asarray(w, dtype=float) for w in self.weights)
        bs = tuple(np.asarray(b, dtype=float) for b in self.biases)
        if len(ws) < 2 or len(ws) != len(bs):
            raise DimensionMismatch("need L >= 1 hidden layers plus an output layer")
        m = ws[0].shape[0]
        for l, (w, b) in enumerate(zip(ws, bs)):
            if b.shape != (w.shape[0],):
                raise DimensionMismatch(f"bias {l} does not match weight rows")
            if l > 0 and w.shape[1] != ws[l - 1].shape[0]:
                raise DimensionMismatch(f"layer {l} input dim mismatch")
            if 0 < l < len(ws) - 1 and w.shape != (m, m):
                raise DimensionMismatch("hidden width must be uniform")
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)

    @property
    def n_x(self) -> int:
        return self.weights[0].shape[1]

    @property
    def n_u(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def width(self) -> int:
        return self.weights[0].shape[0]

    @property
    def depth(self) -> int:
        return len(self.weights) - 1

    def __call__(self, x) -> np.ndarray:
        xi = as_vector(x, "x", size=self.n_x)
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            xi = np.maximum(0.0, w @ xi + b)
        return self.weights[-1] @ xi + self.biases[-1]

    def eval_batch(self, X) -> np.ndarray:
        xi = as_samples(X, "X", n_features=self.n_x)
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            xi = np.maximum(0.0, xi @ w.T + b)
        return xi @ self.weights[-1].T + self.biases[-1]

    def to_json(self) -> dict:
        return {
            "n_x": self.n_x,
            "n_u": self.n_u,
            "M": self.width,
            "L": self.depth,
            "layers": [
                {"W": w.tolist(), "b": b.tolist()} for w, b in zip(self.weights, self.biases)
            ],
        }

    @staticmethod
    def from_json(data: dict) -> "ReluNetwork":
        ws = tuple(np.asarray(layer["W"], float) for layer in data["layers"])
        bs = tuple(np.asarray(layer["b"], float) for layer in data["layers"])
        return ReluNetwork(ws, bs)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, sort_keys=True, indent=2)
            fh.write("\n")

    @staticmethod
    def load(path) -> "ReluNetwork":
        with open(path) as fh:
            return ReluNetwork.from_json(json.load(fh))


def eval_network(net: ReluNetwork, x) -> np.ndarray:
    return net(x)


def param_count(net_or_shape, n_u: int | None = None, M: int | None = None, L: int | None = None) -> int:
    """Number of stored reals, from a network or an (n_x, n_u, M, L) shape."""
    if isinstance(net_or_shape, ReluNetwork):
        return sum(w.size + b.size for w, b in zip(net_or_shape.weights, net_or_shape.biases))
    n_x = int(net_or_shape)
    return (n_x + 1) * M + (L - 1) * (M + 1) * M + (M + 1) * n_u


def memory_footprint_net(net_or_shape, alpha_bit: int = 8, **shape_kw) -> int:
    """Bytes needed to store the parameters, alpha_bit bytes per real."""
    return alpha_bit * param_count(net_or_shape, **shape_kw)


def region_lower_bound(n_x: int, M: int, L: int) -> int:
    """Guaranteed number of affine regions a width-M depth-L network can
    realize, in exact integer arithmetic."""
    if M < n_x:
        raise PreconditionViolated(f"width {M} below input dimension {n_x}")
    if L < 1:
        raise PreconditionViolated("need at least one hidden layer")
    product = (M // n_x) ** (n_x * (L - 1))
    total = sum(math.comb(L, j) for j in range(n_x + 1))
    return product * total


def build_max_network(pieces: ConvexPwa, domain_dim: int | None = None) -> ReluNetwork:
    """Network of width n_x + 1 and depth N computing max of N affine
    pieces exactly on [0,1]^n_x.

    The hidden unit of layer l accumulates the nested form
        t_l = relu(f~_l + t_{l-1} - f~_{l+1}),    t_0 = 0,
    whose telescoped value satisfies f~_N + t_{N-1} = max_i f~_i, where
    f~_i = f_i + c are shifted to stay >= 1 on the cube. The state
    passes through identity rows (safe under relu on the nonnegative
    cube), and the last hidden layer applies relu to the running max
    itself, which the shift keeps positive; the output layer removes c.
    """
    n_x = pieces.n_x
    if domain_dim is not None and domain_dim != n_x:
        raise DimensionMismatch("domain dimension does not match pieces")
    n = pieces.n_pieces
    if n < 1:
        raise EmptyPieces("need at least one affine piece")
    a, b = pieces.a, pieces.b

    # smallest piece value over the cube: vertex minimum in closed form
    vertex_min = float(np.min(b + np.sum(np.minimum(a, 0.0), axis=1)))
    shift = max(0.0, -vertex_min) + 1.0

    width = n_x + 1
    weights: list[np.ndarray] = []
    biases: list[np.ndarray] = []
    for layer in range(n):
        w = np.zeros((width, n_x if layer == 0 else width))
        bvec = np.zeros(width)
        w[:n_x, :n_x] = np.eye(n_x)
        if layer < n - 1:
            w[n_x, :n_x] = a[layer] - a[layer + 1]
            bvec[n_x] = b[layer] - b[layer + 1]
        else:
            w[n_x, :n_x] = a[layer]
            bvec[n_x] = b[layer] + shift
        if layer > 0:
            w[n_x, n_x] = 1.0
        weights.append(w)
        biases.append(bvec)
    out_w = np.zeros((1, width))
    out_w[0, n_x] = 1.0
    weights.append(out_w)
    biases.append(np.array([-shift]))
    return ReluNetwork(tuple(weights), tuple(biases))


@dataclass(frozen=True)
class ExactRepresentation:
    """State/input changes of variables plus one (positive part, negative
    part) network pair per output."""

    Ax: AffineTransform
    Au: AffineTransform
    pairs: tuple[tuple[ReluNetwork, ReluNetwork], ...]

    @property
    def n_u(self) -> int:
        return len(self.pairs)

    def __call__(self, x) -> np.ndarray:
        return self.eval_batch(np.asarray(x, dtype=float).reshape(1, -1))[0]

    def eval_batch(self, X) -> np.ndarray:
        xh = self.Ax.apply_batch(X)
        cols = [gp.eval_batch(xh)[:, 0] - gn.eval_batch(xh)[:, 0] for gp, gn in self.pairs]
        return self.Au.inverse().apply_batch(np.column_stack(cols))

    def to_json(self) -> dict:
        return {
            "Ax": self.Ax.to_json(),
            "Au": self.Au.to_json(),
            "pairs": [[gp.to_json(), gn.to_json()] for gp, gn in self.pairs],
        }

    @staticmethod
    def from_json(data: dict) -> "ExactRepresentation":
        pairs = tuple(
            (ReluNetwork.from_json(gp), ReluNetwork.from_json(gn)) for gp, gn in data["pairs"]
        )
        return ExactRepresentation(
            AffineTransform.from_json(data["Ax"]), AffineTransform.from_json(data["Au"]), pairs
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, sort_keys=True, indent=2)
            fh.write("\n")

    @staticmethod
    def load(path) -> "ExactRepresentation":
        with open(path) as fh:
            return ExactRepresentation.from_json(json.load(fh))


def exact_mpc_network(f: PwaFunction, state_box: Box, input_ranges) -> ExactRepresentation:
    """Represent a PWA law exactly: normalize the domain, split each
    output into a difference of convex parts, and realize each part as a
    max network of width n_x + 1."""
    norm = normalize_domain(f, state_box, input_ranges)
    pairs = []
    for output in range(f.n_u):
        gamma, eta = dc_decompose(norm.f_hat, output=output)
        pairs.append((build_max_network(gamma), build_max_network(eta)))
    return ExactRepresentation(Ax=norm.Ax, Au=norm.Au, pairs=tuple(pairs))


def unit_cube_samples(n_x: int, n_samples: int) -> np.ndarray:
    """Deterministic coverage of [0,1]^n_x: Halton points plus all vertices."""
    halton = qmc.Halton(d=n_x, scramble=False)
    pts = halton.random(n_samples)
    vertices = np.array(
        [[(v >> i) & 1 for i in range(n_x)] for v in range(2**n_x)], dtype=float
    )
    return np.vstack([pts, vertices])


def representation_error(rep: ExactRepresentation, f: PwaFunction, state_box: Box,
                         n_samples: int = 10_000) -> float:
    """Max deviation from the law over a Halton grid (plus cube vertices)
    mapped into the state box, skipping points outside the partition."""
    cube = unit_cube_samples(f.n_x, n_samples)
    states = state_box.lo + cube * state_box.width
    truth, located = f.eval_batch(states)
    if not np.any(located):
        raise PreconditionError("no sample point lies inside the partition")
    approx = rep.eval_batch(states[located])
    return float(np.max(np.abs(approx - truth[located])))
