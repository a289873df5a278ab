import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdvm.dataset import LearnerSpec, gen_clustered
from cdvm.games import ClusteredGame, LearnerGame, char_value, marginal

cluster_configs = st.lists(
    st.tuples(st.integers(1, 4), st.floats(0.1, 3.0)), min_size=1, max_size=4
)


def test_one_point_per_cluster_collects_all_utilities(unit_game):
    assert char_value(unit_game, [0, 3, 5, 7]) == 4.0


def test_empty_coalition_is_worthless(unit_game):
    assert char_value(unit_game, []) == 0.0


def test_redundancy_adds_nothing(unit_game):
    assert char_value(unit_game, [0, 1]) == 1.0


def test_out_of_range_player_rejected(unit_game):
    with pytest.raises(ValueError):
        char_value(unit_game, [8])


def test_marginal_of_first_cluster_member(unit_game):
    assert marginal(unit_game, [3], 0) == 1.0
    assert marginal(unit_game, [0, 3], 1) == 0.0
    with pytest.raises(ValueError):
        marginal(unit_game, [0], 0)


@settings(max_examples=50, deadline=None, derandomize=True)
@given(cluster_configs, st.integers(0, 2**16 - 1))
def test_value_depends_only_on_clusters_hit(config, subset_bits):
    game = ClusteredGame([n for n, _ in config], [u for _, u in config])
    mask = subset_bits & game.full_mask
    subset = [i for i in range(game.n_players) if mask >> i & 1]
    clusters_hit = {int(game.player_cluster[i]) for i in subset}
    expected = sum(game.utilities[k] for k in clusters_hit)
    assert game.value(subset) == pytest.approx(expected)


@settings(max_examples=50, deadline=None, derandomize=True)
@given(cluster_configs, st.integers(0, 2**16 - 1), st.integers(0, 2**16 - 1))
def test_monotone_in_coalition(config, bits_a, bits_b):
    game = ClusteredGame([n for n, _ in config], [u for _, u in config])
    small = bits_a & bits_b & game.full_mask
    large = bits_a & game.full_mask
    assert game.value_of_mask(small) <= game.value_of_mask(large) + 1e-12


@settings(max_examples=50, deadline=None, derandomize=True)
@given(cluster_configs, st.integers(0, 2**16 - 1), st.integers(0, 15))
def test_marginals_are_nonnegative_for_monotone_games(config, subset_bits, player):
    game = ClusteredGame([n for n, _ in config], [u for _, u in config])
    player = player % game.n_players
    mask = subset_bits & game.full_mask & ~(1 << player)
    subset = [i for i in range(game.n_players) if mask >> i & 1]
    delta = marginal(game, subset, player)
    direct = game.value(subset + [player]) - game.value(subset)
    assert delta == pytest.approx(direct)
    assert delta >= -1e-12


def test_vectorized_masks_agree_with_scalar(unit_game):
    masks = np.arange(1 << unit_game.n_players, dtype=np.uint64)
    vec = unit_game.values_for_masks(masks)
    direct = np.array([unit_game.value_of_mask(int(m)) for m in masks])
    assert np.allclose(vec, direct)


def test_accuracy_parametrized_full_set_worth_one():
    game = ClusteredGame.accuracy_parametrized((3, 2, 2, 1), test_sizes=(4, 1, 2, 3))
    assert game.value(range(game.n_players)) == pytest.approx(1.0)


def test_accuracy_parametrized_from_lam2():
    game = ClusteredGame.accuracy_parametrized((2, 3), lam1=0.1, lam2=2.0)
    # u_k = lam1 * lam2 * n_k
    assert game.utilities == pytest.approx((0.4, 0.6))


def test_json_round_trip(unit_game):
    text = unit_game.to_json()
    payload = json.loads(text)
    assert payload == {"cluster_sizes": [3, 2, 2, 1], "utilities": [1.0, 1.0, 1.0, 1.0]}
    clone = ClusteredGame.from_json(text)
    assert clone.cluster_sizes == unit_game.cluster_sizes
    assert clone.utilities == unit_game.utilities


def test_invalid_construction():
    with pytest.raises(ValueError):
        ClusteredGame((0, 2), (1.0, 1.0))
    with pytest.raises(ValueError):
        ClusteredGame((1, 2), (1.0, -1.0))
    with pytest.raises(ValueError):
        ClusteredGame((1, 2), (1.0,))


def test_learner_game_empty_coalition_is_majority_accuracy():
    data = gen_clustered(
        [(0.0, 0.0), (4.0, 0.0)], [3, 1], [0, 1], 0.05, [2, 2], seed=11
    )
    game = LearnerGame(data, LearnerSpec())
    # majority class is 0; half the validation points carry label 0
    assert game.value([]) == pytest.approx(0.5)
    assert game.value(range(4)) == pytest.approx(1.0)


def test_learner_game_values_are_memoized_and_deterministic(preset_data, centroid_spec):
    game = LearnerGame(preset_data, centroid_spec)
    first = game.value([0, 3, 5])
    second = game.value([0, 3, 5])
    assert first == second
    assert game.value([5, 3, 0]) == first
