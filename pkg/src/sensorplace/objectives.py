"""D-optimality, p-median and Chebyshev objectives with (sub)gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from . import _kernels
from .errors import InfeasibleError, SensorPlaceError, SingularInformationError


class DegenerateAnchorsError(SensorPlaceError):
    """The individual optima coincide; the Chebyshev weights are undefined."""


@dataclass(frozen=True)
class Placement:
    """Decision vector with fixed sensors and a budget.

    ``excluded`` nodes may never host a sensor.
    """

    z: np.ndarray
    m: int
    fixed: tuple = ()
    excluded: tuple = ()

    @property
    def selected(self):
        return np.flatnonzero(self.z > 0.5)

    def is_complete(self, tol=1e-9):
        z = self.z
        return (abs(z.sum() - self.m) <= tol and np.all(z >= -tol) and np.all(z <= 1 + tol)
                and np.all(z[list(self.fixed)] >= 1 - tol)
                and np.all(z[list(self.excluded)] <= tol))


# ------------------------------------------------------------ D-optimality


def _cholesky(bundle, z):
    M = bundle.information(z)
    try:
        return la.cholesky(M, lower=True, check_finite=True)
    except (la.LinAlgError, ValueError) as exc:
        eig = np.linalg.eigvalsh(0.5 * (M + M.T)) if np.all(np.isfinite(M)) else [np.nan]
        raise SingularInformationError(
            f"information matrix not positive definite (smallest eigenvalue "
            f"{eig[0]:.3e}); too few sensors to identify all {bundle.n_r} groups") from exc


def f_D(bundle, z):
    """``-log det(X0 + sum_j z_j A_j A_j^T)``."""
    L = _cholesky(bundle, z)
    return -2.0 * float(np.sum(np.log(np.diag(L))))


def grad_f_D(bundle, z):
    """``-tr(M^-1 A_j A_j^T)`` for every node, via triangular solves."""
    L = _cholesky(bundle, z)
    n, r, t = bundle.A.shape
    Y = la.solve_triangular(L, bundle.A.transpose(1, 0, 2).reshape(r, n * t), lower=True)
    return -np.einsum("ajk,ajk->j", Y.reshape(r, n, t), Y.reshape(r, n, t))


def f_D_and_grad(bundle, z):
    L = _cholesky(bundle, z)
    n, r, t = bundle.A.shape
    Y = la.solve_triangular(L, bundle.A.transpose(1, 0, 2).reshape(r, n * t), lower=True)
    Y = Y.reshape(r, n, t)
    return -2.0 * float(np.sum(np.log(np.diag(L)))), -np.einsum("ajk,ajk->j", Y, Y)


# ---------------------------------------------------------------- p-median


def f_T(cost, z):
    """Sum over nodes of the distance to the nearest other sensor (binary z)."""
    selected = np.flatnonzero(np.asarray(z) > 0.5)
    if selected.size < 2:
        raise InfeasibleError(f"p-median objective needs at least 2 sensors, got {selected.size}")
    return _kernels.nearest_sensor_sum(cost.C, selected)


def f_T_relaxed(cost, z):
    """Optimal value of the assignment LP for fractional ``z`` and a subgradient.

    Each node takes unit demand from the other nodes in ascending cost order
    up to their capacities ``z_j``. The subgradient comes from the LP dual
    with node prices set to the last filled cost.
    """
    value, _, grad, feasible = _kernels.greedy_fill(cost.C, cost.order, z)
    if not feasible:
        raise InfeasibleError("assignment LP infeasible: some node sees total capacity < 1")
    return value, grad


# --------------------------------------------------------------- Chebyshev


@dataclass(frozen=True)
class ChebyshevWeights:
    beta: float
    w_D: float
    w_T: float
    f_D_star: float
    f_T_star: float
    f_D_at_T: float  # f_D of the f_T minimiser
    f_T_at_D: float  # f_T of the f_D minimiser


def chebyshev_weights(beta, f_D_star, f_T_star, f_D_at_T, f_T_at_D):
    range_D = f_D_at_T - f_D_star
    range_T = f_T_at_D - f_T_star
    if not (range_D > 0 and range_T > 0):
        raise DegenerateAnchorsError(
            f"anchor ranges must be positive (D: {range_D:.3e}, T: {range_T:.3e})")
    return ChebyshevWeights(float(beta), beta / range_D, (1.0 - beta) / range_T,
                            f_D_star, f_T_star, f_D_at_T, f_T_at_D)


def max_pieces(pieces):
    """Value and subgradient of ``max`` over ``(value, gradient)`` pieces.

    At ties the subgradient is the mean of the tied gradients.
    """
    top = max(v for v, _ in pieces)
    tied = [g for v, g in pieces if v == top]
    return top, tied[0] if len(tied) == 1 else sum(tied) / len(tied)


def f_beta_pieces(bundle, cost, weights, z):
    fd, gd = f_D_and_grad(bundle, z)
    ft, gt = f_T_relaxed(cost, z)
    return ((weights.w_D * (fd - weights.f_D_star), weights.w_D * gd),
            (weights.w_T * (ft - weights.f_T_star), weights.w_T * gt))


def f_beta(bundle, cost, weights, z):
    """Chebyshev scalarisation and a subgradient (mean of both terms at ties)."""
    return max_pieces(f_beta_pieces(bundle, cost, weights, z))


# ------------------------------------------------------ objective wrappers


class DOptimality:
    smooth = True
    name = "doptimal"

    def __init__(self, bundle):
        self.bundle = bundle

    def __call__(self, z):
        return f_D_and_grad(self.bundle, z)

    def value(self, z):
        return f_D(self.bundle, z)

    def line_search(self, z, x):
        """Exact minimiser over ``gamma in [0, 1)`` of ``f(z + gamma (x - z))``.

        Along the segment ``f = f(z) - sum log(1 + gamma lam_i)`` with
        ``lam_i`` the eigenvalues of ``L^-1 (M(x) - M(z)) L^-T``.
        """
        L = _cholesky(self.bundle, z)
        D = self.bundle.information(x) - self.bundle.information(z)
        T = la.solve_triangular(L, la.solve_triangular(L, D, lower=True).T, lower=True)
        lam = np.linalg.eigvalsh(0.5 * (T + T.T))

        def slope(g):
            return -np.sum(lam / (1.0 + g * lam))

        hi = 1.0 - 1e-12
        if slope(hi) <= 0:
            return hi
        lo = 0.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if slope(mid) < 0:
                lo = mid
            else:
                hi = mid
        return lo


class PMedian:
    smooth = False
    name = "pmedian"

    def __init__(self, cost):
        self.cost = cost

    def __call__(self, z):
        return f_T_relaxed(self.cost, z)

    def value(self, z):
        return f_T(self.cost, z)


class Chebyshev:
    smooth = False
    name = "chebyshev"

    def __init__(self, bundle, cost, weights):
        self.bundle = bundle
        self.cost = cost
        self.weights = weights

    def __call__(self, z):
        return f_beta(self.bundle, self.cost, self.weights, z)

    def pieces(self, z):
        """Both weighted terms ``(value, gradient)``; the objective is their max."""
        return f_beta_pieces(self.bundle, self.cost, self.weights, z)

    def value(self, z):
        w = self.weights
        return max(w.w_D * (f_D(self.bundle, z) - w.f_D_star),
                   w.w_T * (f_T(self.cost, z) - w.f_T_star))
