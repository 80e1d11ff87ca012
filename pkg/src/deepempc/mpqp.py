"""Explicit MPC at desk scale: enumerate the critical regions of the
condensed QP over all candidate active sets.

For an active set W of constraint rows with independent gradients, the
equality-constrained optimality system is linear in the parameter
state, so the optimal sequence is v(x) = K x + g and the multipliers
are lam(x) = Lam x + mu on the polyhedron where lam(x) >= 0 and the
inactive rows hold. Every full-dimensional such polyhedron is one
critical region of the piecewise-affine law.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import EnumerationBudgetExceeded, PreconditionError
from .geometry import Polytope, chebyshev_center, normalize_halfspace, dedup_rows
from .linalg import cholesky_factor
from .mpc import CondensedMpc
from .pwa import PwaFunction, Region

SUBSET_BUDGET = 10**6
ZERO_ROW_TOL = 1e-12


@dataclass(frozen=True)
class EnumerationOptions:
    max_active_set_size: int | None = None
    cheby_tol: float = 1e-7


def _parametric_solution(m: CondensedMpc, active: tuple[int, ...], solve_spd):
    """Affine maps x -> v and x -> lam for one active set; None if the
    active gradients are dependent (LICQ fails)."""
    A_w = m.C_c[np.array(active, dtype=int)]
    if np.linalg.matrix_rank(A_w, tol=1e-10) < len(active):
        return None
    # stationarity: 2F v + G' x + A_w' lam = 0; active rows: A_w v = T_w x + c_w
    y = solve_spd(A_w.T)
    schur = A_w @ y
    try:
        schur_chol = cholesky_factor(0.5 * (schur + schur.T))
    except Exception:
        return None

    def solve_schur(rhs):
        return np.linalg.solve(schur_chol.T, np.linalg.solve(schur_chol, rhs))

    T_w = m.T[np.array(active, dtype=int)]
    c_w = m.c_c[np.array(active, dtype=int)]
    g_half = solve_spd(m.G.T)  # (2F)^{-1} G'
    lam_x = -solve_schur(T_w + A_w @ g_half)
    lam_0 = -solve_schur(c_w)
    k_mat = -g_half - y @ lam_x
    g_vec = -y @ lam_0
    return k_mat, g_vec, lam_x, lam_0


def enumerate_explicit(m: CondensedMpc, opts: EnumerationOptions | None = None) -> PwaFunction:
    """Enumerate all critical regions of the condensed problem.

    Regions are kept when their Chebyshev radius exceeds opts.cheby_tol;
    rank-deficient active sets are skipped (and reported once via a
    warning). The returned law stores the first n_u rows of each gain,
    with the full-horizon gains and the active set attached per region.
    """
    opts = opts or EnumerationOptions()
    max_size = opts.max_active_set_size
    if max_size is None:
        max_size = min(m.n_vars, m.n_rows)
    max_size = min(max_size, m.n_vars, m.n_rows)

    n_subsets = sum(math.comb(m.n_rows, k) for k in range(max_size + 1))
    if n_subsets > SUBSET_BUDGET:
        raise EnumerationBudgetExceeded(
            f"{n_subsets} candidate active sets exceed the budget of {SUBSET_BUDGET}"
        )

    chol = cholesky_factor(2.0 * m.F)

    def solve_spd(rhs):
        return np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))

    regions: list[Region] = []
    skipped_degenerate = 0
    for size in range(max_size + 1):
        for active in combinations(range(m.n_rows), size):
            if size:
                parametric = _parametric_solution(m, active, solve_spd)
                if parametric is None:
                    skipped_degenerate += 1
                    continue
                k_mat, g_vec, lam_x, lam_0 = parametric
            else:
                k_mat = -solve_spd(m.G.T)
                g_vec = np.zeros(m.n_vars)
                lam_x = np.zeros((0, m.n_x))
                lam_0 = np.zeros(0)

            inactive = np.setdiff1d(np.arange(m.n_rows), np.array(active, dtype=int))
            rows = [-lam_x, m.C_c[inactive] @ k_mat - m.T[inactive]]
            rhs = [lam_0, m.c_c[inactive] - m.C_c[inactive] @ g_vec]
            Z = np.vstack(rows)
            z = np.concatenate(rhs)

            # drop trivial rows (zero normal); an unsatisfiable one kills the region
            keep = np.linalg.norm(Z, axis=1) > ZERO_ROW_TOL
            if np.any(z[~keep] < -ZERO_ROW_TOL):
                continue
            Z, z = Z[keep], z[keep]
            if Z.shape[0] == 0:
                Z = np.zeros((1, m.n_x))
                z = np.ones(1)

            _, radius = chebyshev_center(Polytope(Z, z))
            if radius <= opts.cheby_tol:
                continue
            regions.append(
                Region(
                    Z=Z,
                    z=z,
                    K=k_mat[: m.n_u],
                    g=g_vec[: m.n_u],
                    active_set=tuple(active),
                    K_full=k_mat,
                    g_full=g_vec,
                )
            )
    if skipped_degenerate:
        warnings.warn(
            f"skipped {skipped_degenerate} degenerate active sets (dependent gradients)",
            RuntimeWarning,
        )
    if not regions:
        raise PreconditionError("no full-dimensional critical region found")
    return PwaFunction(regions, m.n_x, m.n_u)


def memory_footprint_pwa(f: PwaFunction, alpha_bit: int = 8, dedup_tol: float = 1e-6) -> dict:
    """Storage estimate counting unique hyperplanes and unique feedback laws.

    Hyperplanes are compared after scaling to a unit normal with a
    canonical sign; feedback laws compare the applied (first n_u) rows
    entrywise.
    """
    hyperplanes: list[np.ndarray] = []
    for region in f.regions:
        for row, rhs in zip(region.Z, region.z):
            norm = normalize_halfspace(row, rhs)
            if norm is not None:
                hyperplanes.append(np.append(norm[0], norm[1]))
    unique_h = dedup_rows(hyperplanes, dedup_tol)
    laws = [np.append(r.K.ravel(), r.g) for r in f.regions]
    unique_f = dedup_rows(laws, dedup_tol)
    n_h, n_f = len(unique_h), len(unique_f)
    n_x, n_u = f.n_x, f.n_u
    return {
        "n_h": n_h,
        "n_f": n_f,
        "bytes": alpha_bit * (n_h * (n_x + 1) + n_f * (n_x * n_u + n_u)),
    }
