import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdvm.attribution import AttributionMatrix
from cdvm.pruning import (
    ClusterBlocks,
    build_problem,
    default_kappa,
    enumerate_exact,
    grid_search,
    load_solution_dict,
    round_top_s,
    save_solution,
    solve_lp,
    surrogate_objective,
    verify_cluster_coverage,
)


def random_matrix(rng, n, m):
    return AttributionMatrix.from_dense(
        np.round(rng.uniform(-1, 1, size=(n, m)), 3), p=0.5, num_models=1
    )


def random_blocks(rng, max_players=12):
    num_clusters = int(rng.integers(2, 5))
    sizes = [int(rng.integers(1, 5)) for _ in range(num_clusters)]
    while sum(sizes) > max_players:
        sizes = [int(rng.integers(1, 5)) for _ in range(num_clusters)]
    tests = [int(rng.integers(1, 5)) for _ in range(num_clusters)]
    taus = [float(np.round(rng.uniform(0.1, 1.0), 3)) for _ in range(num_clusters)]
    return ClusterBlocks(tuple(sizes), tuple(tests), tuple(taus))


def binary_optimum_oracle(dense, budget, alpha, kappa):
    """Exhaustive search over all C(n, S) binary selections."""
    best = -np.inf
    best_sets = []
    for combo in itertools.combinations(range(dense.shape[0]), budget):
        v = dense[list(combo)].sum(axis=0)
        obj = alpha * v.sum() - (1 - alpha) * np.clip(v - kappa, 0, None).sum()
        if obj > best + 1e-9:
            best = obj
            best_sets = [combo]
        elif obj > best - 1e-9:
            best_sets.append(combo)
    return best, best_sets


# -- problem construction ----------------------------------------------------


def test_problem_validation():
    matrix = AttributionMatrix.from_dense(np.zeros((4, 2)), p=0.5, num_models=1)
    with pytest.raises(ValueError):
        build_problem(matrix, 0, 0.5, 1.0)
    with pytest.raises(ValueError):
        build_problem(matrix, 5, 0.5, 1.0)
    with pytest.raises(ValueError):
        build_problem(matrix, 2, 1.5, 1.0)
    with pytest.raises(ValueError):
        build_problem(matrix, 2, 0.5, -1.0)


def test_trivial_single_cell_instance():
    matrix = AttributionMatrix.from_dense(np.array([[1.0]]), p=0.5, num_models=1)
    sol = solve_lp(build_problem(matrix, 1, 0.5, 2.0))
    assert sol.w == pytest.approx([1.0])
    assert sol.t == pytest.approx([0.0])
    assert sol.objective == pytest.approx(0.5)
    assert sol.selected.tolist() == [0]


def test_budget_equals_n_forces_full_selection():
    rng = np.random.default_rng(1)
    matrix = random_matrix(rng, 5, 3)
    sol = solve_lp(build_problem(matrix, 5, 0.7, 0.4))
    assert sol.w == pytest.approx(np.ones(5))
    assert sol.selected.tolist() == [0, 1, 2, 3, 4]


def test_huge_kappa_kills_slack():
    rng = np.random.default_rng(2)
    matrix = random_matrix(rng, 6, 3)
    sol = solve_lp(build_problem(matrix, 3, 0.5, 100.0))
    assert np.allclose(sol.t, 0.0, atol=1e-9)


# -- LP against the exhaustive oracle ----------------------------------------


def test_lp_dominates_binary_optimum_on_random_instances():
    rng = np.random.default_rng(20260808)
    for _ in range(50):
        n = int(rng.integers(3, 11))
        m = int(rng.integers(1, 7))
        matrix = random_matrix(rng, n, m)
        budget = int(rng.integers(1, n + 1))
        alpha = float(np.round(rng.uniform(0, 1), 2))
        kappa = float(np.round(rng.uniform(0, 1.5), 2))
        sol = solve_lp(build_problem(matrix, budget, alpha, kappa))
        best, _ = binary_optimum_oracle(matrix.dense(), budget, alpha, kappa)
        assert sol.objective >= best - 1e-7
        if sol.fractional_count == 0:
            assert sol.objective == pytest.approx(best, abs=1e-7)
        # feasibility residuals
        assert abs(sol.w.sum() - budget) <= 1e-7
        assert np.all(sol.w >= -1e-9) and np.all(sol.w <= 1 + 1e-9)
        assert np.allclose(sol.v, matrix.dense().T @ sol.w, atol=1e-8)
        assert np.all(sol.t >= np.maximum(sol.v - kappa, 0.0) - 1e-7)
        assert len(sol.selected) == budget


def test_enumeration_mode_matches_oracle():
    rng = np.random.default_rng(11)
    matrix = random_matrix(rng, 7, 4)
    problem = build_problem(matrix, 3, 0.4, 0.6)
    exact = enumerate_exact(problem)
    best, best_sets = binary_optimum_oracle(matrix.dense(), 3, 0.4, 0.6)
    assert exact.objective == pytest.approx(best, abs=1e-12)
    assert tuple(exact.selected) in [tuple(s) for s in best_sets]


def test_alpha_one_equals_greedy_row_sums():
    rng = np.random.default_rng(3)
    matrix = random_matrix(rng, 8, 4)
    row_sums = matrix.dense().sum(axis=1)
    budget = 3
    kappa = 100.0  # larger than any attainable influence
    sol = solve_lp(build_problem(matrix, budget, 1.0, kappa))
    greedy = np.sort(np.lexsort((np.arange(8), -row_sums))[:budget])
    assert sol.objective == pytest.approx(np.sort(row_sums)[-budget:].sum(), abs=1e-9)
    assert sol.selected.tolist() == greedy.tolist()


def test_identical_instances_give_identical_solutions():
    rng = np.random.default_rng(4)
    matrix = random_matrix(rng, 6, 4)
    a = solve_lp(build_problem(matrix, 2, 0.5, 0.3))
    b = solve_lp(build_problem(matrix, 2, 0.5, 0.3))
    assert (a.w == b.w).all()
    assert (a.selected == b.selected).all()
    assert a.objective == b.objective


# -- rounding ------------------------------------------------------------------


def test_round_top_s_stated_tie_rule():
    assert round_top_s(np.array([0.9, 0.6, 0.6, 0.1]), 2).tolist() == [0, 1]


def test_round_integral_support():
    w = np.array([0.0, 1.0, 0.0, 1.0, 1.0])
    assert round_top_s(w, 3).tolist() == [1, 3, 4]


@settings(max_examples=40, deadline=None, derandomize=True)
@given(st.integers(0, 10_000), st.integers(1, 8))
def test_round_matches_reference_sort(seed, budget):
    rng = np.random.default_rng(seed)
    w = np.round(rng.uniform(0, 1, size=8), 2)
    picked = round_top_s(w, budget)
    ranked = sorted(range(8), key=lambda i: (-w[i], i))[:budget]
    assert sorted(ranked) == picked.tolist()


# -- default kappa ---------------------------------------------------------------


def test_default_kappa_formula_fixture():
    dense = np.zeros((5, 4))
    dense[0, 0] = 1.0
    matrix = AttributionMatrix.from_dense(dense, p=0.5, num_models=1)
    # max = 1.0, mean = 1/20
    assert default_kappa(matrix, 5) == pytest.approx(1.0 + 5 * (1.0 / 20))


def test_default_kappa_zero_matrix():
    matrix = AttributionMatrix.from_dense(np.zeros((3, 3)), p=0.5, num_models=1)
    assert default_kappa(matrix, 2) == 0.0


def test_default_kappa_matches_recomputation():
    rng = np.random.default_rng(8)
    for _ in range(20):
        dense = rng.uniform(-1, 1, size=(6, 5))
        matrix = AttributionMatrix.from_dense(dense, p=0.5, num_models=1)
        budget = int(rng.integers(1, 7))
        assert default_kappa(matrix, budget) == pytest.approx(
            dense.max() + budget * dense.mean(), abs=1e-12
        )


def test_default_kappa_counts_implicit_zeros():
    dense = np.zeros((4, 4))
    dense[0, 0] = 0.8
    sparse = AttributionMatrix.from_dense(dense, p=0.5, num_models=1)
    assert default_kappa(sparse, 2) == pytest.approx(0.8 + 2 * 0.8 / 16)


# -- cluster surrogate and coverage ---------------------------------------------


def test_surrogate_simplifies_at_kappa_tau():
    blocks = ClusterBlocks((2, 3), (4, 1), (0.5, 0.25))
    kappa = blocks.kappa_tau
    assert surrogate_objective(blocks, (1, 2), kappa) == pytest.approx(kappa * 5)
    assert surrogate_objective(blocks, (0, 0), kappa) == 0.0


def test_surrogate_matches_direct_recomputation():
    rng = np.random.default_rng(6)
    for _ in range(20):
        blocks = random_blocks(rng)
        counts = [int(rng.integers(0, n + 1)) for n in blocks.cluster_sizes]
        kappa = float(rng.uniform(0, 1))
        direct = sum(
            m * min(t * s, kappa)
            for m, t, s in zip(blocks.test_sizes, blocks.taus, counts)
        )
        assert surrogate_objective(blocks, counts, kappa) == pytest.approx(direct)


def test_surrogate_validates_counts():
    blocks = ClusterBlocks((2, 2), (1, 1), (0.5, 0.5))
    with pytest.raises(ValueError):
        surrogate_objective(blocks, (3, 0), 0.5)


def test_coverage_report():
    cluster_of = np.array([0, 0, 1, 2])
    full = verify_cluster_coverage([0, 2, 3], cluster_of)
    assert full.all_covered
    assert full.counts.tolist() == [1, 1, 1]
    empty = verify_cluster_coverage([], cluster_of)
    assert not empty.all_covered
    assert empty.counts.tolist() == [0, 0, 0]


def test_lemma_coverage_on_random_blocks():
    rng = np.random.default_rng(20260808)
    for _ in range(60):
        blocks = random_blocks(rng)
        n = sum(blocks.cluster_sizes)
        budget = int(rng.integers(blocks.num_clusters, n + 1))
        sol = solve_lp(build_problem(blocks.matrix(), budget, 0.5, blocks.kappa_tau))
        report = verify_cluster_coverage(sol.selected, blocks.train_cluster_of())
        assert report.all_covered


def test_every_integral_optimum_covers_clusters():
    rng = np.random.default_rng(99)
    for _ in range(20):
        blocks = random_blocks(rng)
        n = sum(blocks.cluster_sizes)
        budget = int(rng.integers(blocks.num_clusters, n + 1))
        kappa = blocks.kappa_tau
        _, best_sets = binary_optimum_oracle(blocks.matrix().dense(), budget, 0.5, kappa)
        for combo in best_sets:
            report = verify_cluster_coverage(np.array(combo), blocks.train_cluster_of())
            assert report.all_covered


def test_block_instance_with_equal_levels_selects_one_per_cluster():
    blocks = ClusterBlocks((3, 2, 2), (2, 3, 1), (0.4, 0.4, 0.4))
    sol = solve_lp(build_problem(blocks.matrix(), 3, 0.5, blocks.kappa_tau))
    counts = verify_cluster_coverage(sol.selected, blocks.train_cluster_of()).counts
    assert counts.tolist() == [1, 1, 1]
    assert sol.objective == pytest.approx(0.5 * blocks.kappa_tau * sum(blocks.test_sizes))


def test_budget_specific_optima_need_not_nest():
    # Two specialists and one generalist: the best single point is the
    # generalist, but the best pair is the two specialists.
    dense = np.array([[0.8, 0.0], [0.0, 0.8], [0.5, 0.5]])
    matrix = AttributionMatrix.from_dense(dense, p=0.5, num_models=1)
    small = enumerate_exact(build_problem(matrix, 1, 0.5, 0.6))
    large = enumerate_exact(build_problem(matrix, 2, 0.5, 0.6))
    assert small.selected.tolist() == [2]
    assert large.selected.tolist() == [0, 1]
    assert not set(small.selected).issubset(set(large.selected))


# -- grid search -------------------------------------------------------------


def test_grid_search_single_point():
    rng = np.random.default_rng(10)
    matrix = random_matrix(rng, 5, 3)
    alpha, kappa, sol = grid_search(matrix, 2, [0.5], [0.3], lambda sel: 1.0)
    assert (alpha, kappa) == (0.5, 0.3)
    assert len(sol.selected) == 2


def test_grid_search_requires_grids():
    rng = np.random.default_rng(10)
    matrix = random_matrix(rng, 5, 3)
    with pytest.raises(ValueError):
        grid_search(matrix, 2, [], [0.3], lambda sel: 1.0)


def test_grid_search_prefers_smaller_kappa_then_larger_alpha():
    rng = np.random.default_rng(10)
    matrix = random_matrix(rng, 5, 3)
    alpha, kappa, _ = grid_search(
        matrix, 2, [0.3, 0.7], [0.8, 0.2], lambda sel: 0.5
    )
    assert kappa == 0.2
    assert alpha == 0.7


def test_grid_search_finds_covering_pair_on_blocks():
    blocks = ClusterBlocks((3, 2, 1), (2, 2, 2), (0.3, 0.6, 0.9))
    matrix = blocks.matrix()
    cluster_of = blocks.train_cluster_of()

    def evaluator(selected):
        return float(verify_cluster_coverage(selected, cluster_of).all_covered)

    alpha, kappa, sol = grid_search(
        matrix, 3, [0.3, 0.5, 0.7], [blocks.kappa_tau, 10.0], evaluator
    )
    assert evaluator(sol.selected) == 1.0
    assert kappa == blocks.kappa_tau


def test_grid_search_best_dominates_default_pair():
    rng = np.random.default_rng(14)
    matrix = random_matrix(rng, 7, 4)
    budget = 3
    default_pair = (0.5, default_kappa(matrix, budget))

    def evaluator(selected):
        # deterministic stand-in score for a retrained model
        return float(matrix.dense()[selected].sum())

    default_solution = solve_lp(build_problem(matrix, budget, *default_pair))
    _, _, best = grid_search(
        matrix, budget, [0.2, 0.5, 0.8], [0.1, default_pair[1]], evaluator
    )
    assert evaluator(best.selected) >= evaluator(default_solution.selected)


def test_solution_json_round_trip(tmp_path):
    rng = np.random.default_rng(12)
    matrix = random_matrix(rng, 6, 3)
    sol = solve_lp(build_problem(matrix, 2, 0.5, 0.4))
    path = tmp_path / "solution.json"
    save_solution(sol, str(path))
    payload = load_solution_dict(str(path))
    assert payload["S"] == 2
    assert payload["alpha"] == 0.5
    assert payload["kappa"] == 0.4
    assert payload["selected"] == sol.selected.tolist()
    assert payload["fractional_count"] == sol.fractional_count
    assert payload["objective"] == pytest.approx(sol.objective)
