"""Removal-curve and retention benchmarks for selection strategies.

A strategy maps (dataset, budget, seed) to a retained set of exactly that
size. The harness retrains the learner on each retained set, records test
accuracy per (method, level, seed) cell, and offers the analysis tools
used in reports: overlap coefficients between retained sets, a selection
frequency spectrum across budgets, and cross-method score normalization.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np

from .attribution import AttributionMatrix, MsrConfig, banzhaf_from_T, msr_estimate
from .dataset import LabeledDataset, LearnerSpec, accuracy, majority_model, train_learner
from .games import LearnerGame
from .pruning import DEFAULT_ALPHAS, build_problem, candidate_kappas, grid_search, solve_lp
from .rng import derive_seed, make_rng
from .semivalues import ValueVector, dataoob, exact_shapley, loo

DEFAULT_LEVELS = (0.30, 0.25, 0.20, 0.15, 0.10, 0.05)

SPECTRUM_CLASSES = (
    "stable-core",
    "useful-pool-high",
    "useful-pool-low",
    "budget-specific",
    "approaching",
    "occasional",
    "rare",
    "virtually-never",
)


@dataclass(frozen=True)
class RemovalCurve:
    """Accuracy after each removal step; entry 0 is the full-data model."""

    order: np.ndarray
    accuracies: np.ndarray
    seed: int | None = None


def removal_curve(
    data: LabeledDataset,
    spec: LearnerSpec,
    order: Sequence[int],
    split: str = "test",
) -> RemovalCurve:
    """Retrain after each removal and record accuracy on ``split``.

    ``order`` must be a permutation of the train positions. Removing the
    last point leaves no model; that step scores the majority-class
    predictor instead.
    """
    order_arr = np.asarray(order, dtype=np.int64)
    n = data.n_train
    if not np.array_equal(np.sort(order_arr), np.arange(n)):
        raise ValueError("removal order must be a permutation of the train positions")
    accuracies = np.empty(n + 1)
    for step in range(n + 1):
        remaining = order_arr[step:]
        if remaining.size:
            model = train_learner(data, remaining, spec)
        else:
            model = majority_model(data)
        accuracies[step] = accuracy(model, data, split)
    return RemovalCurve(order=order_arr, accuracies=accuracies)


def pruning_order_from_values(
    values: ValueVector | np.ndarray, direction: str = "low-first"
) -> np.ndarray:
    """Stable value-sorted removal order with index tie-breaks."""
    vals = values.values if isinstance(values, ValueVector) else np.asarray(values)
    if not np.all(np.isfinite(vals)):
        raise ValueError("values must be finite")
    if direction == "low-first":
        keys = vals
    elif direction == "high-first":
        keys = -vals
    else:
        raise ValueError(f"unknown direction: {direction!r}")
    return np.lexsort((np.arange(len(vals)), keys))


def budget_for_level(level: float, n_train: int) -> int:
    """Retention budget for a fractional level, at least one instance."""
    return max(1, int(round(level * n_train)))


class SelectionStrategy(Protocol):
    name: str

    def select(self, data: LabeledDataset, budget: int, seed: int) -> np.ndarray: ...


@dataclass
class RandomStrategy:
    """Keeps a uniformly random subset; retained sets are nested per seed."""

    base_seed: int = 0
    name: str = "random"

    def select(self, data: LabeledDataset, budget: int, seed: int) -> np.ndarray:
        perm = make_rng(self.base_seed, "random-order", seed).permutation(data.n_train)
        return np.sort(perm[:budget])


@dataclass
class ValueOrderStrategy:
    """Keeps the ``budget`` highest-valued instances under a value function."""

    name: str
    value_fn: Callable[[LabeledDataset, int], ValueVector]
    _cache: dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    def select(self, data: LabeledDataset, budget: int, seed: int) -> np.ndarray:
        order = self._cache.get(seed)
        if order is None:
            order = pruning_order_from_values(self.value_fn(data, seed), "low-first")
            self._cache[seed] = order
        return np.sort(order[data.n_train - budget :])


@dataclass
class CdvmStrategy:
    """Re-solves the selection program per budget, tuning on validation.

    The attribution matrix is estimated once per benchmark seed (cached and
    shared with any other consumer holding the same instance) unless a
    precomputed matrix is supplied.
    """

    msr: MsrConfig
    learner: LearnerSpec
    alphas: Sequence[float] = DEFAULT_ALPHAS
    kappas: Sequence[float] | None = None
    fixed_matrix: AttributionMatrix | None = None
    name: str = "cdvm"
    threads: int = 1
    _cache: dict[int, AttributionMatrix] = field(default_factory=dict, repr=False)

    def matrix_for_seed(self, data: LabeledDataset, seed: int) -> AttributionMatrix:
        if self.fixed_matrix is not None:
            return self.fixed_matrix
        matrix = self._cache.get(seed)
        if matrix is None:
            cfg = replace(self.msr, seed=derive_seed(self.msr.seed, "bench-msr", seed))
            matrix = msr_estimate(data, cfg, threads=self.threads)
            self._cache[seed] = matrix
        return matrix

    def select(self, data: LabeledDataset, budget: int, seed: int) -> np.ndarray:
        matrix = self.matrix_for_seed(data, seed)
        kappas = (
            self.kappas if self.kappas is not None else candidate_kappas(matrix, budget)
        )

        def evaluate(selected: np.ndarray) -> float:
            model = train_learner(data, selected, self.learner)
            return accuracy(model, data, "val")

        _, _, solution = grid_search(matrix, budget, self.alphas, kappas, evaluate)
        return solution.selected


@dataclass
class FixedCdvmStrategy:
    """Solves the selection program at one fixed (alpha, kappa) per budget."""

    matrix: AttributionMatrix
    alpha: float
    kappa: float
    name: str = "cdvm-fixed"

    def select(self, data: LabeledDataset, budget: int, seed: int) -> np.ndarray:
        problem = build_problem(self.matrix, budget, self.alpha, self.kappa)
        return solve_lp(problem).selected


def loo_strategy(spec: LearnerSpec) -> ValueOrderStrategy:
    return ValueOrderStrategy("loo", lambda data, seed: loo(LearnerGame(data, spec)))


def shapley_strategy(spec: LearnerSpec) -> ValueOrderStrategy:
    return ValueOrderStrategy(
        "shapley", lambda data, seed: exact_shapley(LearnerGame(data, spec))
    )


def dataoob_strategy(
    spec: LearnerSpec, num_bootstraps: int = 1000, base_seed: int = 0
) -> ValueOrderStrategy:
    return ValueOrderStrategy(
        "dataoob",
        lambda data, seed: dataoob(
            data, spec, num_bootstraps, derive_seed(base_seed, "bench-oob", seed)
        ),
    )


def banzhaf_strategy(cdvm: CdvmStrategy) -> ValueOrderStrategy:
    """Row-mean ordering built from the same attribution estimates."""
    return ValueOrderStrategy(
        "banzhaf",
        lambda data, seed: banzhaf_from_T(cdvm.matrix_for_seed(data, seed)),
    )


@dataclass
class RetentionReport:
    """Per-cell accuracies of every (method, level, seed) combination."""

    levels: tuple[float, ...]
    methods: tuple[str, ...]
    rows: list[tuple[str, float, int, float]]
    retained: dict[tuple[str, float, int], np.ndarray]

    def cell(self, method: str, level: float) -> np.ndarray:
        return np.array(
            [acc for m, lv, _, acc in self.rows if m == method and lv == level]
        )

    def mean(self, method: str, level: float) -> float:
        return float(self.cell(method, level).mean())

    def std(self, method: str, level: float) -> float:
        cell = self.cell(method, level)
        return float(cell.std(ddof=1)) if len(cell) > 1 else 0.0

    def count(self, method: str, level: float) -> int:
        return len(self.cell(method, level))


def retention_eval(
    data: LabeledDataset,
    spec: LearnerSpec,
    methods: Sequence[SelectionStrategy],
    levels: Sequence[float] = DEFAULT_LEVELS,
    seeds: int | Sequence[int] = 5,
) -> RetentionReport:
    """Score every strategy at every retention level across seeds.

    Levels must be strictly decreasing fractions of the train split. Each
    strategy must return exactly the budgeted number of train positions.
    """
    levels = tuple(float(lv) for lv in levels)
    if any(not 0.0 < lv <= 1.0 for lv in levels):
        raise ValueError("retention levels must lie in (0, 1]")
    if any(a <= b for a, b in zip(levels, levels[1:])):
        raise ValueError("retention levels must be strictly decreasing")
    seed_ids = list(range(seeds)) if isinstance(seeds, int) else [int(s) for s in seeds]
    rows: list[tuple[str, float, int, float]] = []
    retained: dict[tuple[str, float, int], np.ndarray] = {}
    for method in methods:
        for level in levels:
            budget = budget_for_level(level, data.n_train)
            for seed in seed_ids:
                kept = np.asarray(method.select(data, budget, seed), dtype=np.int64)
                if len(np.unique(kept)) != budget:
                    raise ValueError(
                        f"strategy {method.name!r} returned {len(np.unique(kept))} "
                        f"instances, expected {budget}"
                    )
                model = train_learner(data, kept, spec)
                rows.append((method.name, level, seed, accuracy(model, data, "test")))
                retained[(method.name, level, seed)] = kept
    return RetentionReport(
        levels=levels,
        methods=tuple(m.name for m in methods),
        rows=rows,
        retained=retained,
    )


def overlap_coefficient(a: set | frozenset | Sequence[int], b: set | frozenset | Sequence[int]) -> float:
    """|A intersect B| / min(|A|, |B|). Errors on an empty set."""
    sa, sb = set(a), set(b)
    if not sa or not sb:
        raise ValueError("overlap coefficient is undefined for empty sets")
    return len(sa & sb) / min(len(sa), len(sb))


def overlap_matrix(
    retained_sets: Mapping[float, Sequence[Sequence[int]] | Sequence[int]],
    pairing: str = "same-seed-diagonal",
) -> tuple[list[float], np.ndarray]:
    """Average overlap coefficients between retained sets across levels.

    ``retained_sets`` maps each level to one retained set or to a list of
    retained sets aligned by seed. With ``same-seed-diagonal`` pairing,
    off-diagonal cells pair identical seed indices across levels while
    diagonal cells average over distinct seed pairs at the same level (1.0
    when only one seed is available). With ``cross-level`` pairing every
    cell averages over all ordered pairs of distinct seeds.
    """
    if pairing not in ("same-seed-diagonal", "cross-level"):
        raise ValueError(f"unknown pairing mode: {pairing!r}")
    levels = sorted(retained_sets, reverse=True)
    per_level: list[list[set[int]]] = []
    for lv in levels:
        entry = retained_sets[lv]
        if entry and isinstance(entry[0], (int, np.integer)):
            groups = [set(int(i) for i in entry)]
        else:
            groups = [set(int(i) for i in s) for s in entry]
        if not groups or any(not g for g in groups):
            raise ValueError("retained sets must be nonempty")
        per_level.append(groups)
    n_seeds = len(per_level[0])
    if any(len(g) != n_seeds for g in per_level):
        raise ValueError("every level needs the same number of retained sets")
    if pairing == "cross-level" and n_seeds < 2:
        raise ValueError("cross-level pairing needs at least two seeds")
    size = len(levels)
    matrix = np.zeros((size, size))
    for a in range(size):
        for b in range(size):
            if pairing == "cross-level":
                pairs = [
                    (s, s2) for s in range(n_seeds) for s2 in range(n_seeds) if s != s2
                ]
            elif a == b:
                pairs = [(s, s2) for s in range(n_seeds) for s2 in range(s + 1, n_seeds)]
                if not pairs:
                    matrix[a, b] = 1.0
                    continue
            else:
                pairs = [(s, s) for s in range(n_seeds)]
            matrix[a, b] = float(
                np.mean(
                    [overlap_coefficient(per_level[a][s], per_level[b][s2]) for s, s2 in pairs]
                )
            )
    return levels, matrix


@dataclass(frozen=True)
class SpectrumEntry:
    instance: int
    label: str
    peak_frequency: float
    majority_levels: int


def frequency_spectrum(
    frequencies: Mapping[tuple[int, float], float] | np.ndarray,
) -> list[SpectrumEntry]:
    """Classify instances by how often budgets select them.

    Accepts either a map (instance, level) -> frequency or an array of shape
    (instances, levels). Instances selected by a majority of seeds (f > 0.5)
    at some level are banded by persistence: majority at exactly one level
    is budget-specific, at two or three levels the low useful pool, at four
    or five the high useful pool, and at every level the stable core (bands
    follow the six-level reporting protocol). The rest are banded by their
    peak frequency: approaching (>= 0.3), occasional (>= 0.1), rare
    (>= 0.01) and virtually never selected.
    """
    if isinstance(frequencies, np.ndarray):
        table = np.asarray(frequencies, dtype=np.float64)
    else:
        instances = sorted({i for i, _ in frequencies})
        levels = sorted({lv for _, lv in frequencies}, reverse=True)
        table = np.zeros((len(instances), len(levels)))
        for (inst, lv), f in frequencies.items():
            table[instances.index(inst), levels.index(lv)] = f
    if table.size and (table.min() < 0.0 or table.max() > 1.0):
        raise ValueError("selection frequencies must lie in [0, 1]")
    num_levels = table.shape[1]
    entries: list[SpectrumEntry] = []
    for inst in range(table.shape[0]):
        row = table[inst]
        majority = int(np.sum(row > 0.5))
        peak = float(row.max()) if row.size else 0.0
        if majority >= 1:
            if majority == num_levels:
                label = "stable-core"
            elif majority == 1:
                label = "budget-specific"
            elif majority <= 3:
                label = "useful-pool-low"
            else:
                label = "useful-pool-high"
        else:
            if peak >= 0.3:
                label = "approaching"
            elif peak >= 0.1:
                label = "occasional"
            elif peak >= 0.01:
                label = "rare"
            else:
                label = "virtually-never"
        entries.append(SpectrumEntry(inst, label, peak, majority))
    return entries


def selection_frequencies(
    report: RetentionReport, method: str, n_train: int
) -> np.ndarray:
    """Per-(instance, level) retention frequency of one method across seeds."""
    table = np.zeros((n_train, len(report.levels)))
    for col, level in enumerate(report.levels):
        sets = [
            kept
            for (m, lv, _), kept in sorted(report.retained.items(), key=lambda kv: kv[0])
            if m == method and lv == level
        ]
        if not sets:
            raise ValueError(f"no retained sets recorded for method {method!r}")
        for kept in sets:
            table[kept, col] += 1.0
        table[:, col] /= len(sets)
    return table


def normalize_performance(scores: Mapping[str, Sequence[float]]) -> dict[str, float]:
    """Min-max normalize per-method score sums against per-setting extremes.

    A method that is best in every setting maps to 1 and one that is worst
    everywhere maps to 0. Requires at least two methods with identical
    setting coverage; degenerate inputs (all methods identical) error.
    """
    if len(scores) < 2:
        raise ValueError("normalization needs at least two methods")
    arrays = {m: np.asarray(v, dtype=np.float64) for m, v in scores.items()}
    lengths = {len(v) for v in arrays.values()}
    if len(lengths) != 1:
        raise ValueError("all methods must cover the same settings")
    stacked = np.vstack(list(arrays.values()))
    best = stacked.max(axis=0).sum()
    worst = stacked.min(axis=0).sum()
    if best == worst:
        raise ValueError("degenerate scores: best and worst sums coincide")
    return {m: float((v.sum() - worst) / (best - worst)) for m, v in arrays.items()}


# -- CSV emission ---------------------------------------------------------


def save_report_csv(report: RetentionReport, path: str) -> None:
    """Write per-cell accuracies: ``method,level,seed,accuracy``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "level", "seed", "accuracy"])
        for method, level, seed, acc in report.rows:
            writer.writerow([method, repr(level), seed, repr(acc)])


def save_curve_csv(curve: RemovalCurve, path: str) -> None:
    """Write a removal curve: ``step,removed_index,accuracy``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "removed_index", "accuracy"])
        writer.writerow([0, "", repr(float(curve.accuracies[0]))])
        for step, removed in enumerate(curve.order, start=1):
            writer.writerow([step, int(removed), repr(float(curve.accuracies[step]))])


def save_overlap_csv(levels: Sequence[float], matrix: np.ndarray, path: str) -> None:
    """Write an overlap matrix in long form: ``level_a,level_b,overlap``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["level_a", "level_b", "overlap"])
        for a, lv_a in enumerate(levels):
            for b, lv_b in enumerate(levels):
                writer.writerow([repr(float(lv_a)), repr(float(lv_b)), repr(float(matrix[a, b]))])


def save_spectrum_csv(entries: Sequence[SpectrumEntry], path: str) -> None:
    """Write spectrum entries: ``instance,class,peak_frequency,majority_levels``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance", "class", "peak_frequency", "majority_levels"])
        for entry in entries:
            writer.writerow(
                [entry.instance, entry.label, repr(entry.peak_frequency), entry.majority_levels]
            )
