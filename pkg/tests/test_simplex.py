import numpy as np
import pytest

from cdvm.simplex import solve_bounded_lp

scipy_linprog = pytest.importorskip("scipy.optimize").linprog


def _random_instance(rng):
    m = int(rng.integers(1, 5))
    n = int(rng.integers(m, m + 6))
    constraints = np.round(rng.uniform(-2, 2, size=(m, n)), 3)
    lower = np.zeros(n)
    upper = rng.choice([1.0, 2.0, np.inf], size=n)
    interior = np.where(np.isfinite(upper), upper, 2.0) * rng.uniform(0.2, 0.8, size=n)
    rhs = constraints @ interior
    objective = np.round(rng.uniform(-1, 1, size=n), 3)
    return objective, constraints, rhs, lower, upper


def test_trivial_box_lp():
    res = solve_bounded_lp(
        np.array([1.0, 2.0]),
        np.array([[1.0, 1.0]]),
        np.array([1.0]),
        np.zeros(2),
        np.ones(2),
    )
    assert res.status == "optimal"
    assert res.objective == pytest.approx(2.0)
    assert res.x == pytest.approx([0.0, 1.0])


def test_forced_solution_when_budget_equals_capacity():
    res = solve_bounded_lp(
        np.array([-1.0, 3.0, 0.5]),
        np.array([[1.0, 1.0, 1.0]]),
        np.array([3.0]),
        np.zeros(3),
        np.ones(3),
    )
    assert res.status == "optimal"
    assert res.x == pytest.approx([1.0, 1.0, 1.0])


def test_infeasible_detection():
    res = solve_bounded_lp(
        np.array([1.0]),
        np.array([[1.0]]),
        np.array([5.0]),
        np.zeros(1),
        np.ones(1),
    )
    assert res.status == "infeasible"


def test_unbounded_detection():
    res = solve_bounded_lp(
        np.array([0.0, 1.0]),
        np.array([[1.0, 0.0]]),
        np.array([0.5]),
        np.zeros(2),
        np.array([1.0, np.inf]),
    )
    assert res.status == "unbounded"


def test_matches_reference_solver_on_random_instances():
    rng = np.random.default_rng(12345)
    solved = 0
    for _ in range(40):
        objective, constraints, rhs, lower, upper = _random_instance(rng)
        res = solve_bounded_lp(objective, constraints, rhs, lower, upper)
        bounds = [(lo, None if np.isinf(up) else up) for lo, up in zip(lower, upper)]
        ref = scipy_linprog(
            -objective, A_eq=constraints, b_eq=rhs, bounds=bounds, method="highs"
        )
        if ref.status == 3:
            assert res.status == "unbounded"
            continue
        assert ref.status == 0
        assert res.status == "optimal"
        assert res.objective == pytest.approx(-ref.fun, abs=1e-6)
        assert np.allclose(constraints @ res.x, rhs, atol=1e-7)
        assert np.all(res.x >= lower - 1e-9)
        assert np.all(res.x <= upper + 1e-9)
        solved += 1
    assert solved >= 25


def test_deterministic_given_instance():
    rng = np.random.default_rng(9)
    objective, constraints, rhs, lower, upper = _random_instance(rng)
    a = solve_bounded_lp(objective, constraints, rhs, lower, upper)
    b = solve_bounded_lp(objective, constraints, rhs, lower, upper)
    assert (a.x == b.x).all()
    assert a.objective == b.objective


def test_warm_start_reaches_same_optimum():
    rng = np.random.default_rng(31)
    objective, constraints, rhs, lower, upper = _random_instance(rng)
    cold = solve_bounded_lp(objective, constraints, rhs, lower, upper)
    # perturb the objective; the old basis stays primal feasible
    warm = solve_bounded_lp(
        objective * 0.5, constraints, rhs, lower, upper,
        start=(cold.basis, cold.var_status),
    )
    reference = solve_bounded_lp(objective * 0.5, constraints, rhs, lower, upper)
    assert warm.status == "optimal"
    assert warm.objective == pytest.approx(reference.objective, abs=1e-8)


def test_degenerate_instance_terminates():
    # many redundant rows force degenerate pivots
    constraints = np.array(
        [
            [1.0, 1.0, 1.0, 1.0],
            [1.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 1.0],
        ]
    )
    rhs = np.array([2.0, 1.0, 1.0])
    res = solve_bounded_lp(
        np.array([1.0, 1.0, 1.0, 1.0]), constraints, rhs, np.zeros(4), np.ones(4)
    )
    assert res.status == "optimal"
    assert res.objective == pytest.approx(2.0)
