"""Per-instance data values: leave-one-out, Shapley, Banzhaf, out-of-bag.

Exact estimators enumerate all coalitions (bounded at 20 players); the
Monte Carlo estimator samples permutations. Closed-form shortcuts are
available for clustered games, where a player in cluster k is worth
``u_k / n_k`` (Shapley) or ``u_k / 2**(n_k - 1)`` (Banzhaf).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .dataset import LabeledDataset, LearnerSpec, train_learner
from .games import ClusteredGame, Game
from .rng import make_rng

ENUMERATION_LIMIT = 20


@dataclass
class ValueVector:
    """One scalar value per training player, plus estimator provenance."""

    values: np.ndarray
    estimator: str
    stderr: np.ndarray | None = None
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("data values must be finite")
        if self.stderr is not None:
            self.stderr = np.asarray(self.stderr, dtype=np.float64)
            if self.stderr.shape != self.values.shape:
                raise ValueError("stderr must match values in length")

    def __len__(self) -> int:
        return len(self.values)


def _all_mask_values(game: Game) -> np.ndarray:
    """Characteristic values for every coalition, indexed by bitmask."""
    n = game.n_players
    if n > ENUMERATION_LIMIT:
        raise ValueError(f"enumeration is limited to {ENUMERATION_LIMIT} players, got {n}")
    size = 1 << n
    if isinstance(game, ClusteredGame):
        return game.values_for_masks(np.arange(size, dtype=np.uint64))
    return np.array([game.value_of_mask(mask) for mask in range(size)], dtype=np.float64)


def _popcounts(size: int, n_bits: int) -> np.ndarray:
    masks = np.arange(size, dtype=np.uint64)
    counts = np.zeros(size, dtype=np.int64)
    for bit in range(n_bits):
        counts += ((masks >> np.uint64(bit)) & np.uint64(1)).astype(np.int64)
    return counts


def loo(game: Game) -> ValueVector:
    """Leave-one-out values: v(D) - v(D minus player)."""
    full = game.full_mask
    v_full = game.value_of_mask(full)
    vals = np.array(
        [v_full - game.value_of_mask(full ^ (1 << i)) for i in range(game.n_players)]
    )
    return ValueVector(vals, "loo")


def exact_shapley(game: Game) -> ValueVector:
    """Exact Shapley values by coalition enumeration (n <= 20)."""
    n = game.n_players
    values = _all_mask_values(game)
    sizes = _popcounts(1 << n, n)
    fact = [math.factorial(k) for k in range(n + 1)]
    weights = np.array(
        [fact[s] * fact[n - s - 1] / fact[n] for s in range(n)], dtype=np.float64
    )
    masks = np.arange(1 << n, dtype=np.int64)
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        bit = 1 << i
        without = masks[(masks & bit) == 0]
        marginals = values[without | bit] - values[without]
        out[i] = float(np.sum(weights[sizes[without]] * marginals))
    return ValueVector(out, "shapley-exact", metadata={"subsets": 1 << n})


def exact_banzhaf(game: Game) -> ValueVector:
    """Exact Banzhaf values by coalition enumeration (n <= 20)."""
    n = game.n_players
    values = _all_mask_values(game)
    masks = np.arange(1 << n, dtype=np.int64)
    scale = 0.5 ** (n - 1)
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        bit = 1 << i
        without = masks[(masks & bit) == 0]
        out[i] = scale * float(np.sum(values[without | bit] - values[without]))
    return ValueVector(out, "banzhaf-exact", metadata={"subsets": 1 << n})


def cluster_shapley_closed_form(game: ClusteredGame) -> ValueVector:
    """Closed-form Shapley values of a clustered game: u_k / n_k per member."""
    sizes = np.asarray(game.cluster_sizes, dtype=np.float64)
    utils = np.asarray(game.utilities, dtype=np.float64)
    vals = (utils / sizes)[game.player_cluster]
    return ValueVector(vals, "shapley-closed-form")


def cluster_banzhaf_closed_form(game: ClusteredGame) -> ValueVector:
    """Closed-form Banzhaf values of a clustered game: u_k / 2**(n_k-1)."""
    sizes = np.asarray(game.cluster_sizes, dtype=np.float64)
    utils = np.asarray(game.utilities, dtype=np.float64)
    vals = (utils / 2.0 ** (sizes - 1))[game.player_cluster]
    return ValueVector(vals, "banzhaf-closed-form")


def mc_shapley(
    game: Game,
    permutations: int,
    seed: int,
    antithetic: bool = False,
) -> ValueVector:
    """Permutation-sampling Shapley estimate with per-player standard errors.

    With ``antithetic=True`` permutations are processed in (draw, reverse)
    pairs, which cancels part of the sampling variance; reported standard
    errors then treat the two halves as ordinary samples and are slightly
    conservative.
    """
    if permutations < 1:
        raise ValueError("permutations must be >= 1")
    n = game.n_players
    rng = make_rng(seed, "mc-shapley")
    sums = np.zeros(n)
    sumsq = np.zeros(n)

    def walk(perm: np.ndarray) -> None:
        mask = 0
        prev = game.value_of_mask(0)
        for player in perm:
            mask |= 1 << int(player)
            cur = game.value_of_mask(mask)
            delta = cur - prev
            sums[player] += delta
            sumsq[player] += delta * delta
            prev = cur

    done = 0
    while done < permutations:
        perm = rng.permutation(n)
        walk(perm)
        done += 1
        if antithetic and done < permutations:
            walk(perm[::-1])
            done += 1

    mean = sums / permutations
    if permutations > 1:
        var = (sumsq - permutations * mean**2) / (permutations - 1)
        stderr = np.sqrt(np.maximum(var, 0.0) / permutations)
    else:
        stderr = np.zeros(n)
    return ValueVector(
        mean,
        "shapley-mc",
        stderr=stderr,
        metadata={"permutations": permutations, "seed": seed, "antithetic": antithetic},
    )


def dataoob(
    data: LabeledDataset,
    spec: LearnerSpec,
    num_bootstraps: int,
    seed: int,
) -> ValueVector:
    """Out-of-bag values: mean correctness of each instance when held out.

    Each bootstrap draws n train positions with replacement, trains on the
    bag (multiplicity preserved), and scores the out-of-bag instances against
    their own labels. Instances that never fall out of bag get value 0 and
    are listed under ``metadata["never_oob"]``.
    """
    if num_bootstraps < 1:
        raise ValueError("num_bootstraps must be >= 1")
    n = data.n_train
    feats = data.train_features
    labels = data.train_labels
    oob_counts = np.zeros(n, dtype=np.int64)
    oob_correct = np.zeros(n, dtype=np.float64)
    for b in range(num_bootstraps):
        rng = make_rng(seed, "dataoob", b)
        bag = rng.integers(0, n, size=n)
        out_of_bag = np.setdiff1d(np.arange(n), bag)
        if out_of_bag.size == 0:
            continue
        model = train_learner(data, bag, spec)
        preds = model.predict(feats[out_of_bag])
        oob_correct[out_of_bag] += preds == labels[out_of_bag]
        oob_counts[out_of_bag] += 1
    never = oob_counts == 0
    values = np.zeros(n)
    np.divide(oob_correct, oob_counts, out=values, where=~never)
    return ValueVector(
        values,
        "dataoob",
        metadata={
            "num_bootstraps": num_bootstraps,
            "seed": seed,
            "never_oob": [int(i) for i in np.flatnonzero(never)],
        },
    )


def save_values(vv: ValueVector, path: str) -> None:
    """Write a value vector as CSV: ``index,value,stderr``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "value", "stderr"])
        for i, v in enumerate(vv.values):
            err = "" if vv.stderr is None else format(vv.stderr[i], ".17g")
            writer.writerow([i, format(v, ".17g"), err])


def load_values(path: str) -> ValueVector:
    """Read a value vector written by :func:`save_values`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["index", "value", "stderr"]:
            raise ValueError(f"malformed value file header in {path!r}")
        values: list[float] = []
        errs: list[float] = []
        has_err = True
        for cells in reader:
            if len(cells) != 3:
                raise ValueError(f"malformed value row in {path!r}")
            values.append(float(cells[1]))
            if cells[2] == "":
                has_err = False
            else:
                errs.append(float(cells[2]))
    stderr = np.asarray(errs) if has_err and len(errs) == len(values) else None
    return ValueVector(np.asarray(values), "loaded", stderr=stderr, metadata={"path": path})
