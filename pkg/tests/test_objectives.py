import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from sensorplace.errors import InfeasibleError
from sensorplace.network import CostMatrix
from sensorplace.objectives import (DegenerateAnchorsError, chebyshev_weights, f_beta, f_D,
                                    f_D_and_grad, f_T, f_T_relaxed, grad_f_D, max_pieces)
from sensorplace.pareto import brute_force_pareto
from sensorplace.relaxation import project_box_simplex
from sensorplace.sensitivity import SensitivityBundle


def random_bundle(rng, n, r, t=2, ridge=0.1):
    return SensitivityBundle(rng.normal(size=(n, r, t)), ridge * np.eye(r))


def random_cost(rng, n, integer=False):
    """Shortest-path closure of a random complete graph."""
    W = rng.integers(1, 10, size=(n, n)).astype(float) if integer else rng.uniform(1, 10, (n, n))
    W = np.minimum(W, W.T)
    np.fill_diagonal(W, 0)
    for k in range(n):
        W = np.minimum(W, W[:, k:k + 1] + W[k:k + 1, :])
    return CostMatrix.from_matrix(W)


def feasible_fractional(rng, n, m, grid=None):
    """Random z in the relaxed set; m >= 2 gives every node capacity >= 1."""
    z = project_box_simplex(rng.uniform(-1, 2, size=n), m)
    if grid:
        # dyadic values that still sum to m and respect the box
        z = np.floor(z * grid) / grid
        short = int(round((m - z.sum()) * grid))
        for j in np.argsort(z):
            add = min(int(round((1 - z[j]) * grid)), short)
            z[j] += add / grid
            short -= add
    return z


def lp_oracle_exact(C, z):
    """Assignment LP by vertex enumeration in rational arithmetic.

    Per node the feasible set is a box cut by one equality, so every vertex
    has all but at most one variable at a bound.
    """
    n = len(z)
    C = [[Fraction(c) for c in row] for row in C]
    z = [Fraction(v) for v in z]
    total = Fraction(0)
    for i in range(n):
        others = [j for j in range(n) if j != i]
        best = None
        for free in others:
            rest = [j for j in others if j != free]
            for ups in itertools.product((0, 1), repeat=len(rest)):
                mass = sum(z[j] for j, u in zip(rest, ups) if u)
                x = 1 - mass
                if 0 <= x <= z[free]:
                    val = x * C[i][free] + sum(z[j] * C[i][j] for j, u in zip(rest, ups) if u)
                    best = val if best is None else min(best, val)
        total += best
    return total


def lp_oracle_simplex(C, z):
    n = len(z)
    cost, A_eq, bounds = [], [], []
    for i in range(n):
        for j in range(n):
            cost.append(C[i, j])
            bounds.append((0, 0) if i == j else (0, z[j]))
    for i in range(n):
        row = np.zeros(n * n)
        row[i * n:(i + 1) * n] = 1
        A_eq.append(row)
    res = linprog(cost, A_eq=np.array(A_eq), b_eq=np.ones(n), bounds=bounds, method="highs")
    assert res.status == 0
    return res.fun


# ----------------------------------------------------------------- f_D


def test_f_D_identity_zero():
    b = SensitivityBundle(np.zeros((3, 2, 1)), np.eye(2))
    assert f_D(b, np.zeros(3)) == 0.0


def test_f_D_diagonal():
    A = np.array([[[1.0], [0.0]]])
    b = SensitivityBundle(A, np.eye(2))
    assert f_D(b, [1.0]) == pytest.approx(-np.log(2), rel=1e-15)


def test_grad_f_D_scalar():
    b = SensitivityBundle(np.array([[[1.0]]]), np.eye(1))
    assert grad_f_D(b, [0.0])[0] == pytest.approx(-1.0, rel=1e-15)


def test_f_D_monotone_and_gradient_nonpositive(rng):
    b = random_bundle(rng, 8, 4)
    for _ in range(20):
        z = rng.uniform(size=8)
        j = rng.integers(8)
        w = z.copy()
        w[j] += rng.uniform(0, 1)
        assert f_D(b, w) <= f_D(b, z) + 1e-12
        assert np.all(grad_f_D(b, z) <= 0)


@pytest.mark.parametrize("seed", range(20))
def test_grad_f_D_finite_differences(seed):
    rng = np.random.default_rng(seed)
    r = int(rng.integers(1, 6))
    b = random_bundle(rng, 7, r, t=int(rng.integers(1, 4)))
    z = rng.uniform(0.2, 1.0, size=7)
    g = grad_f_D(b, z)
    h = 1e-5
    fd = np.array([(f_D(b, z + h * e) - f_D(b, z - h * e)) / (2 * h) for e in np.eye(7)])
    assert np.linalg.norm(g - fd) <= 1e-6 * np.linalg.norm(g)
    value, g2 = f_D_and_grad(b, z)
    assert value == f_D(b, z)
    np.testing.assert_array_equal(g, g2)


# ----------------------------------------------------------------- f_T


def test_f_T_path():
    C = np.array([[0, 1, 2], [1, 0, 1], [2, 1, 0]], dtype=float)
    assert f_T(CostMatrix.from_matrix(C), [1, 0, 1]) == 5.0


def test_f_T_complete_graph():
    n = 6
    cost = CostMatrix.from_matrix(np.ones((n, n)) - np.eye(n))
    for z in ([1, 1, 0, 0, 0, 0], [0, 1, 0, 1, 1, 0], np.ones(n)):
        assert f_T(cost, z) == n


def test_f_T_all_ones(rng):
    cost = random_cost(rng, 7)
    C = cost.C + np.diag(np.full(7, np.inf))
    assert f_T(cost, np.ones(7)) == pytest.approx(C.min(axis=1).sum(), rel=1e-15)


def test_f_T_needs_two_sensors():
    cost = CostMatrix.from_matrix(np.ones((3, 3)) - np.eye(3))
    with pytest.raises(InfeasibleError):
        f_T(cost, [1, 0, 0])


def test_f_T_relaxed_hand_example():
    cost = CostMatrix.from_matrix(np.ones((3, 3)) - np.eye(3))
    value, _ = f_T_relaxed(cost, [0.5, 0.5, 1.0])
    assert value == 3.0


def test_f_T_relaxed_infeasible():
    cost = CostMatrix.from_matrix(np.ones((3, 3)) - np.eye(3))
    with pytest.raises(InfeasibleError):
        f_T_relaxed(cost, [0.2, 0.2, 0.2])


@pytest.mark.parametrize("seed", range(100))
def test_relaxed_equals_binary(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 13))
    m = int(rng.integers(2, n + 1))
    cost = random_cost(rng, n, integer=bool(seed % 2))
    z = np.zeros(n)
    z[rng.choice(n, m, replace=False)] = 1.0
    assert f_T_relaxed(cost, z)[0] == f_T(cost, z)


@pytest.mark.parametrize("seed", range(30))
def test_relaxed_matches_exact_lp(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 7))
    m = int(rng.integers(2, n))
    cost = random_cost(rng, n, integer=True)
    # dyadic capacities keep the greedy arithmetic exact in floating point
    z = feasible_fractional(rng, n, m, grid=8)
    value, _ = f_T_relaxed(cost, z)
    assert Fraction(value) == lp_oracle_exact(cost.C, z)
    assert value == pytest.approx(lp_oracle_simplex(cost.C, z), rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_relaxed_subgradient_and_convexity(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 10))
    m = int(rng.integers(2, n))
    cost = random_cost(rng, n)
    x = feasible_fractional(rng, n, m)
    y = feasible_fractional(rng, n, m)
    fx, gx = f_T_relaxed(cost, x)
    fy, _ = f_T_relaxed(cost, y)
    scale = 1e-9 * max(1.0, abs(fx), abs(fy))
    assert fy >= fx + gx @ (y - x) - scale
    fm, _ = f_T_relaxed(cost, 0.5 * (x + y))
    assert fm <= 0.5 * (fx + fy) + scale


# ----------------------------------------------------------- Chebyshev


def test_weights_substitution():
    w = chebyshev_weights(0.5, 1.0, 3.0, 3.0, 13.0)
    assert (w.w_D, w.w_T) == (0.25, 0.05)


def test_weights_limits_and_symmetry():
    assert chebyshev_weights(1e-12, 0, 0, 2, 10).w_D < 1e-12
    w = chebyshev_weights(0.5, 0.0, 0.0, 4.0, 4.0)
    assert w.w_D == w.w_T


def test_weights_degenerate():
    with pytest.raises(DegenerateAnchorsError):
        chebyshev_weights(0.5, 1.0, 1.0, 1.0, 2.0)
    with pytest.raises(DegenerateAnchorsError):
        chebyshev_weights(0.5, 1.0, 1.0, 2.0, 0.5)


def test_max_pieces_tie_mean():
    value, g = max_pieces([(1.0, np.array([2.0, 0.0])), (1.0, np.array([0.0, 4.0]))])
    assert value == 1.0
    np.testing.assert_array_equal(g, [1.0, 2.0])
    value, g = max_pieces([(1.0, np.array([2.0])), (0.5, np.array([7.0]))])
    np.testing.assert_array_equal(g, [2.0])


@pytest.mark.parametrize("beta", [0.2, 0.5, 0.8])
def test_f_beta_at_D_minimiser(problem10, beta):
    enum = brute_force_pareto(problem10, 3)
    imgs = enum.images
    iD = int(np.argmin(imgs[:, 0]))
    iT = int(np.lexsort((imgs[:, 0], imgs[:, 1]))[0])
    fD, fT = imgs[:, 0].min(), imgs[:, 1].min()
    w = chebyshev_weights(beta, fD, fT, imgs[iT, 0], imgs[iD, 1])
    value, _ = f_beta(problem10.bundle, problem10.cost, w, enum.placements[iD])
    assert value == pytest.approx(1 - beta, rel=1e-12)
    # nonnegative on every feasible placement
    for z in enum.placements[::7]:
        assert f_beta(problem10.bundle, problem10.cost, w, z)[0] >= 0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_f_beta_subgradient_inequality(seed):
    rng = np.random.default_rng(seed)
    n = 8
    b = random_bundle(rng, n, 3)
    cost = random_cost(rng, n)
    w = chebyshev_weights(float(rng.uniform(0.1, 0.9)), -5.0, 0.0, 5.0, 50.0)
    x = feasible_fractional(rng, n, 3)
    y = feasible_fractional(rng, n, 3)
    fx, gx = f_beta(b, cost, w, x)
    fy, _ = f_beta(b, cost, w, y)
    assert fy >= fx + gx @ (y - x) - 1e-9 * max(1.0, abs(fx))
