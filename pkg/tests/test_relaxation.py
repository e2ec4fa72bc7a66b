import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sensorplace import synthetic
from sensorplace.errors import InfeasibleError, NumericalError
from sensorplace.objectives import Chebyshev, DOptimality, chebyshev_weights
from sensorplace.pareto import brute_force_pareto
from sensorplace.problem import build_problem
from sensorplace.relaxation import (STEP_RULES, lmo_top_m, project_box_simplex,
                                    solve_relaxation, uniform_start)
from sensorplace.sensitivity import SensitivityBundle
from sensorplace.verify import scalarised_values


def test_lmo_examples():
    assert lmo_top_m(np.array([-3.0, -1.0, -2.0]), 2).tolist() == [1, 0, 1]
    assert lmo_top_m(np.array([-3.0, 0.0, -2.0]), 2, fixed=[1]).tolist() == [1, 1, 0]
    assert lmo_top_m(np.zeros(5), 2).tolist() == [1, 1, 0, 0, 0]
    assert lmo_top_m(np.array([-3.0, -1.0, -2.0]), 2, excluded=[0]).tolist() == [0, 1, 1]


def test_lmo_budget_too_large():
    with pytest.raises(InfeasibleError):
        lmo_top_m(np.zeros(3), 4)


def test_projection_examples():
    np.testing.assert_allclose(project_box_simplex(np.full(3, 0.5), 2), [2 / 3] * 3, atol=1e-14)
    v = np.array([0.2, 0.7, 0.6, 0.5])
    np.testing.assert_allclose(project_box_simplex(v, 2), v, atol=1e-14)
    np.testing.assert_allclose(project_box_simplex(np.array([10.0, -10.0, 0.5]), 1),
                               [1, 0, 0], atol=1e-12)


vectors = st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=30)


@settings(max_examples=200, deadline=None)
@given(v=vectors, data=st.data())
def test_projection_kkt(v, data):
    v = np.array(v)
    n = v.size
    fixed = data.draw(st.lists(st.integers(0, n - 1), max_size=2, unique=True))
    rest = [j for j in range(n) if j not in fixed]
    excluded = data.draw(st.lists(st.sampled_from(rest), max_size=2, unique=True)) if rest else []
    hi = n - len(excluded)
    m = data.draw(st.integers(max(len(fixed), 1), max(hi, len(fixed), 1)))
    if m > hi:
        return
    z = project_box_simplex(v, m, fixed, excluded)
    assert abs(z.sum() - m) < 1e-10
    assert np.all(z >= 0) and np.all(z <= 1)
    assert np.all(z[fixed] == 1) and np.all(z[excluded] == 0)
    free = np.array([j for j in rest if j not in excluded], dtype=int)
    if not free.size or m == len(fixed):
        return
    # clip(v - tau): one multiplier explains every free coordinate
    interior = free[(z[free] > 1e-12) & (z[free] < 1 - 1e-12)]
    if interior.size:
        tau = np.mean(v[interior] - z[interior])
        np.testing.assert_allclose(v[interior] - z[interior], tau, atol=1e-9)
        assert np.all(v[free][z[free] <= 1e-12] <= tau + 1e-9)
        assert np.all(v[free][z[free] >= 1 - 1e-12] >= tau + 1 - 1e-9)
    # projection is idempotent
    np.testing.assert_allclose(project_box_simplex(z, m, fixed, excluded), z, atol=1e-10)


@settings(max_examples=100, deadline=None)
@given(v=vectors, seed=st.integers(0, 1000))
def test_projection_is_nearest(v, seed):
    v = np.array(v)
    m = 1 + seed % v.size
    z = project_box_simplex(v, m)
    rng = np.random.default_rng(seed)
    for _ in range(10):
        y = project_box_simplex(rng.normal(size=v.size), m)
        assert np.sum((v - z) ** 2) <= np.sum((v - y) ** 2) + 1e-9


def test_uniform_start_feasible():
    z = uniform_start(6, 3, fixed=[0], excluded=[5])
    assert z.sum() == pytest.approx(3) and z[0] == 1 and z[5] == 0


def test_single_node():
    b = SensitivityBundle(np.array([[[2.0]]]), np.eye(1))
    obj = DOptimality(b)
    res = solve_relaxation(obj, 1)
    assert res.z.tolist() == [1.0]
    assert res.lower_bound == obj.value(np.ones(1))


@pytest.fixture(scope="module")
def instances():
    nets = [synthetic.random_looped_network(10, seed=2), synthetic.grid_network(3, 3, seed=1),
            synthetic.random_looped_network(12, seed=4), synthetic.grid_network(3, 4, seed=5)]
    return [build_problem(net, lam=1e4) for net in nets]


@pytest.mark.parametrize("step", STEP_RULES)
def test_f_D_bound_below_enumeration(instances, step):
    for p in instances:
        for m in (2, 3, 4):
            opt = brute_force_pareto(p, m).images[:, 0].min()
            res = solve_relaxation(p.d_objective(), m, step=step)
            assert res.lower_bound <= opt
            assert all(gap >= -1e-12 * abs(f) for _, f, _, gap in res.trace)


def test_nonsmooth_bounds_below_enumeration(instances):
    for p in instances:
        for m in (2, 3, 4):
            enum = brute_force_pareto(p, m)
            res = solve_relaxation(p.t_objective(), m)
            assert res.lower_bound <= enum.images[:, 1].min()
            fD, fT = enum.images[:, 0].min(), enum.images[:, 1].min()
            iD, iT = np.argmin(enum.images[:, 0]), np.argmin(enum.images[:, 1])
            w = chebyshev_weights(0.5, fD, fT, enum.images[iT, 0], enum.images[iD, 1])
            res = solve_relaxation(Chebyshev(p.bundle, p.cost, w), m)
            assert res.lower_bound <= scalarised_values(enum.images, w).min()


def test_fixed_and_excluded_respected(instances):
    p = instances[0]
    res = solve_relaxation(p.d_objective(), 4, fixed=[1], excluded=[2, 3])
    assert res.z[1] == pytest.approx(1) and np.all(res.z[[2, 3]] == 0)
    assert res.z.sum() == pytest.approx(4)


def test_iteration_limit_flagged(instances):
    p = instances[2]
    res = solve_relaxation(p.t_objective(), 3, max_iter=3)
    assert not res.converged and res.iterations == 3
    assert res.lower_bound <= brute_force_pareto(p, 3).images[:, 1].min()


def test_trace_csv(tmp_path, instances):
    res = solve_relaxation(instances[0].d_objective(), 3)
    path = tmp_path / "trace.csv"
    res.write_trace(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "iteration,value,bound"
    assert len(lines) == len(res.trace) + 1


def test_non_finite_objective():
    class Broken:
        smooth = True

        def __call__(self, z):
            return float("nan"), np.zeros_like(z)

    with pytest.raises(NumericalError):
        solve_relaxation(Broken(), 2, n=4)


def test_unknown_step_rule(instances):
    with pytest.raises(ValueError):
        solve_relaxation(instances[0].d_objective(), 2, step="pairwise")


@pytest.mark.slow
@pytest.mark.parametrize("net,m,lam", [
    (synthetic.random_looped_network(300, seed=11, n_groups=11), 5, np.inf),
    (synthetic.random_looped_network(300, seed=11, n_groups=11), 40, 1e4),
    (synthetic.grid_network(12, 25, seed=3, n_groups=11), 10, np.inf),
    (synthetic.grid_network(12, 25, seed=3, n_groups=11), 20, 1e4),
], ids=["random300-m5", "random300-m40", "grid-m10", "grid-m20"])
def test_frank_wolfe_gap_budget(net, m, lam):
    p = build_problem(net, lam=lam)
    obj = p.d_objective()
    z0 = uniform_start(p.n, m)
    res = solve_relaxation(obj, m)
    assert res.iterations <= 2000
    assert res.value - res.lower_bound < 1e-4 * abs(obj.value(z0))
