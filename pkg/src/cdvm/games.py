"""Cooperative games over training instances.

Two concrete games are provided: an analytic clustered-utility game whose
value counts the clusters a coalition touches, and a learner-backed game
whose value is validation accuracy of a model trained on the coalition.
"""

from __future__ import annotations

import json
from typing import Iterable, Sequence

import numpy as np

from .dataset import (
    LabeledDataset,
    LearnerSpec,
    accuracy,
    majority_model,
    train_learner,
)

_MEMO_PLAYER_LIMIT = 24


class Game:
    """A deterministic set function over players 0 .. n_players-1.

    Subset evaluations are memoized by bitmask for small games (at most
    24 players); larger games are evaluated directly.
    """

    def __init__(self, n_players: int, memoize: bool | None = None) -> None:
        if n_players < 1:
            raise ValueError("a game needs at least one player")
        self.n_players = n_players
        if memoize is None:
            memoize = n_players <= _MEMO_PLAYER_LIMIT
        self._memo: dict[int, float] | None = {} if memoize else None

    def subset_mask(self, subset: Iterable[int]) -> int:
        mask = 0
        for player in subset:
            p = int(player)
            if p < 0 or p >= self.n_players:
                raise ValueError(f"player id {p} out of range for {self.n_players} players")
            mask |= 1 << p
        return mask

    def value(self, subset: Iterable[int]) -> float:
        return self.value_of_mask(self.subset_mask(subset))

    def value_of_mask(self, mask: int) -> float:
        if self._memo is not None:
            hit = self._memo.get(mask)
            if hit is not None:
                return hit
        val = float(self._value_mask(mask))
        if self._memo is not None:
            self._memo[mask] = val
        return val

    def _value_mask(self, mask: int) -> float:
        raise NotImplementedError

    @property
    def full_mask(self) -> int:
        return (1 << self.n_players) - 1


class ClusteredGame(Game):
    """Indicator-sum game: a coalition earns a cluster's utility iff it
    contains at least one member of that cluster.

    Players are laid out contiguously, cluster 0 first. The value of a
    coalition therefore depends only on the set of clusters it intersects.
    """

    def __init__(self, cluster_sizes: Sequence[int], utilities: Sequence[float]) -> None:
        sizes = tuple(int(s) for s in cluster_sizes)
        utils = tuple(float(u) for u in utilities)
        if len(sizes) != len(utils):
            raise ValueError("cluster_sizes and utilities must have equal length")
        if any(s < 1 for s in sizes):
            raise ValueError("every cluster needs at least one member")
        if any(not u > 0 for u in utils):
            raise ValueError("utilities must be positive")
        super().__init__(int(np.sum(sizes)), memoize=False)
        self.cluster_sizes = sizes
        self.utilities = utils
        self.player_cluster = np.repeat(np.arange(len(sizes)), sizes)
        edges = np.concatenate([[0], np.cumsum(sizes)])
        self._cluster_masks = [
            ((1 << int(b)) - 1) ^ ((1 << int(a)) - 1) for a, b in zip(edges[:-1], edges[1:])
        ]

    @property
    def num_clusters(self) -> int:
        return len(self.cluster_sizes)

    def _value_mask(self, mask: int) -> float:
        total = 0.0
        for cmask, util in zip(self._cluster_masks, self.utilities):
            if mask & cmask:
                total += util
        return total

    def values_for_masks(self, masks: np.ndarray) -> np.ndarray:
        """Vectorized evaluation for an array of bitmasks (n_players <= 63)."""
        masks = np.asarray(masks, dtype=np.uint64)
        out = np.zeros(masks.shape, dtype=np.float64)
        for cmask, util in zip(self._cluster_masks, self.utilities):
            out += util * ((masks & np.uint64(cmask)) != 0)
        return out

    @classmethod
    def accuracy_parametrized(
        cls,
        cluster_sizes: Sequence[int],
        test_sizes: Sequence[float] | None = None,
        lam1: float | None = None,
        lam2: float | None = None,
    ) -> "ClusteredGame":
        """Clustered game whose utilities model accuracy on a clustered test set.

        Each cluster contributes ``lam1 * m_k`` where ``m_k`` is its test
        size, either given directly or derived as ``lam2 * n_k`` (equal
        train/test distribution). ``lam1`` defaults to ``1 / sum(m_k)``, the
        normalization that makes the full coalition worth exactly 1.
        """
        sizes = tuple(int(s) for s in cluster_sizes)
        if test_sizes is None:
            if lam2 is None:
                raise ValueError("provide test_sizes or lam2")
            test = [lam2 * s for s in sizes]
        else:
            test = [float(m) for m in test_sizes]
        if lam1 is None:
            lam1 = 1.0 / float(np.sum(test))
        return cls(sizes, [lam1 * m for m in test])

    def to_json(self) -> str:
        return json.dumps(
            {"cluster_sizes": list(self.cluster_sizes), "utilities": list(self.utilities)}
        )

    @classmethod
    def from_json(cls, text: str) -> "ClusteredGame":
        payload = json.loads(text)
        return cls(payload["cluster_sizes"], payload["utilities"])


class LearnerGame(Game):
    """Game valued by validation accuracy of a model trained on the coalition.

    The empty coalition is worth the validation accuracy of always predicting
    the majority class of the full train split.
    """

    def __init__(self, data: LabeledDataset, spec: LearnerSpec, metric_split: str = "val") -> None:
        if data.split_rows(metric_split).size == 0:
            raise ValueError(f"metric split {metric_split!r} is empty")
        super().__init__(data.n_train)
        self.data = data
        self.spec = spec
        self.metric_split = metric_split

    def _value_mask(self, mask: int) -> float:
        if mask == 0:
            return accuracy(majority_model(self.data), self.data, self.metric_split)
        positions = [p for p in range(self.n_players) if mask >> p & 1]
        model = train_learner(self.data, positions, self.spec)
        return accuracy(model, self.data, self.metric_split)


def char_value(game: Game, subset: Iterable[int]) -> float:
    """Value of a coalition under the game's characteristic function."""
    return game.value(subset)


def marginal(game: Game, subset: Iterable[int], player: int) -> float:
    """Marginal contribution of ``player`` on top of ``subset``."""
    mask = game.subset_mask(subset)
    p = int(player)
    if p < 0 or p >= game.n_players:
        raise ValueError(f"player id {p} out of range")
    bit = 1 << p
    if mask & bit:
        raise ValueError(f"player {p} is already in the subset")
    return game.value_of_mask(mask | bit) - game.value_of_mask(mask)
