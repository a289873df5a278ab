"""Attribution-matrix estimation by maximum sample reuse.

The estimator samples many training subsets, trains one model per subset,
and scores each validation instance. Entry (i, j) of the resulting matrix
is the mean score of validation instance j over subsets containing train
instance i minus the mean over subsets excluding it, which lands every
entry in [-1, 1] for 0/1 scores.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dataset import LabeledDataset, LearnerSpec, correctness_vector, train_learner
from .rng import make_rng
from .semivalues import ValueVector

_FILE_MAGIC = "CDVM-T"
_FILE_VERSION = "v1"
_DENSE_DENSITY = 0.5
_BATCH = 256


class AttributionMatrix:
    """Sparse n_train x n_val matrix of per-test influence estimates.

    Storage is triplet-based, with a dense fallback once more than half the
    entries are nonzero. Instances are immutable; ``counts_in``/``counts_out``
    record how many sampled subsets contained/excluded each train instance
    (``None`` for matrices loaded from disk), and ``undefined`` flags train
    instances whose row could not be estimated because one of the two
    conditional means had no samples.
    """

    def __init__(
        self,
        n_train: int,
        n_val: int,
        rows: np.ndarray,
        cols: np.ndarray,
        vals: np.ndarray,
        p: float,
        num_models: int,
        seed: int = 0,
        counts_in: np.ndarray | None = None,
        counts_out: np.ndarray | None = None,
        undefined: np.ndarray | None = None,
        _dense: np.ndarray | None = None,
    ) -> None:
        self.n_train = int(n_train)
        self.n_val = int(n_val)
        self.p = float(p)
        self.num_models = int(num_models)
        self.seed = int(seed)
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if not (rows.shape == cols.shape == vals.shape):
            raise ValueError("triplet arrays must have equal length")
        if rows.size:
            if rows.min() < 0 or rows.max() >= self.n_train:
                raise ValueError("triplet row index out of range")
            if cols.min() < 0 or cols.max() >= self.n_val:
                raise ValueError("triplet column index out of range")
        if vals.size and (vals.min() < -1.0 or vals.max() > 1.0):
            raise ValueError("attribution entries must lie in [-1, 1]")
        order = np.lexsort((cols, rows))
        self._rows = rows[order]
        self._cols = cols[order]
        self._vals = vals[order]
        keys = self._rows * self.n_val + self._cols
        if keys.size and np.any(np.diff(keys) == 0):
            raise ValueError("duplicate triplet positions")
        self.counts_in = None if counts_in is None else np.asarray(counts_in, dtype=np.int64)
        self.counts_out = None if counts_out is None else np.asarray(counts_out, dtype=np.int64)
        if self.counts_in is not None and self.counts_out is not None:
            if np.any(self.counts_in + self.counts_out != self.num_models):
                raise ValueError("counts_in + counts_out must equal num_models per instance")
        self.undefined = (
            np.zeros(self.n_train, dtype=bool) if undefined is None
            else np.asarray(undefined, dtype=bool)
        )
        self._dense_cache = _dense
        for arr in (self._rows, self._cols, self._vals, self.counts_in,
                    self.counts_out, self.undefined):
            if arr is not None:
                arr.setflags(write=False)

    @classmethod
    def from_dense(
        cls,
        values: np.ndarray,
        p: float,
        num_models: int,
        seed: int = 0,
        counts_in: np.ndarray | None = None,
        counts_out: np.ndarray | None = None,
        undefined: np.ndarray | None = None,
    ) -> "AttributionMatrix":
        values = np.asarray(values, dtype=np.float64)
        rows, cols = np.nonzero(values)
        dense = None
        if values.size and len(rows) > _DENSE_DENSITY * values.size:
            dense = values.copy()
        return cls(
            values.shape[0], values.shape[1], rows, cols, values[rows, cols],
            p, num_models, seed, counts_in, counts_out, undefined, _dense=dense,
        )

    @property
    def nnz(self) -> int:
        return len(self._vals)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_train, self.n_val)

    @property
    def density(self) -> float:
        total = self.n_train * self.n_val
        return self.nnz / total if total else 0.0

    def triplets(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Stored entries as (rows, cols, values), sorted by (row, col)."""
        return self._rows, self._cols, self._vals

    def dense(self) -> np.ndarray:
        """Materialize the full matrix (implicit zeros included)."""
        if self._dense_cache is None:
            out = np.zeros((self.n_train, self.n_val))
            out[self._rows, self._cols] = self._vals
            out.setflags(write=False)
            self._dense_cache = out
        return self._dense_cache

    def row_means(self) -> np.ndarray:
        """Arithmetic mean of each row over all n_val columns."""
        sums = np.bincount(self._rows, weights=self._vals, minlength=self.n_train)
        return sums / self.n_val

    def max_entry(self) -> float:
        """Maximum over all n_train * n_val entries, implicit zeros included."""
        if self.nnz == self.n_train * self.n_val:
            return float(self._vals.max())
        return float(max(self._vals.max(), 0.0)) if self.nnz else 0.0

    def mean_entry(self) -> float:
        """Mean over all n_train * n_val entries, implicit zeros included."""
        total = self.n_train * self.n_val
        return float(self._vals.sum() / total) if total else 0.0


@dataclass(frozen=True)
class MsrConfig:
    """Sampling plan for the maximum-sample-reuse estimator."""

    p: float = 0.03
    num_models: int = 5000
    seed: int = 0
    learner: LearnerSpec = LearnerSpec()

    def __post_init__(self) -> None:
        if not 0.0 < self.p < 1.0:
            raise ValueError("inclusion probability p must lie in (0, 1)")
        if self.num_models < 1:
            raise ValueError("num_models must be >= 1")


def _sample_subset(rng: np.random.Generator, n: int, p: float) -> np.ndarray:
    # Empty draws are rejected and redrawn from the same stream: a model
    # needs at least one training point, and the resample keeps per-task
    # determinism intact.
    mask = rng.random(n) < p
    while not mask.any():
        mask = rng.random(n) < p
    return mask


def _default_scores(
    data: LabeledDataset, spec: LearnerSpec
) -> Callable[[np.ndarray], np.ndarray]:
    def score(positions: np.ndarray) -> np.ndarray:
        model = train_learner(data, positions, spec)
        return correctness_vector(model, data, "val").astype(np.float64)

    return score


def msr_estimate(
    data: LabeledDataset,
    cfg: MsrConfig,
    score_fn: Callable[[np.ndarray], np.ndarray] | None = None,
    threads: int = 1,
) -> AttributionMatrix:
    """Estimate the attribution matrix from ``cfg.num_models`` sampled subsets.

    ``score_fn`` maps an array of train positions to a per-validation score
    vector in [0, 1]; by default it trains the configured learner and records
    0/1 correctness. Results are bit-identical for any ``threads`` value:
    work is split into fixed batches and reduced in batch order.
    """
    if data.n_val == 0:
        raise ValueError("validation split must be nonempty")
    n, m = data.n_train, data.n_val
    score = score_fn if score_fn is not None else _default_scores(data, cfg.learner)

    def run_batch(start: int, stop: int) -> tuple[np.ndarray, np.ndarray]:
        members = np.zeros((stop - start, n), dtype=np.float64)
        scores = np.zeros((stop - start, m), dtype=np.float64)
        for t in range(start, stop):
            rng = make_rng(cfg.seed, "msr", t)
            mask = _sample_subset(rng, n, cfg.p)
            members[t - start] = mask
            scores[t - start] = score(np.flatnonzero(mask))
        return members, scores

    batches = [
        (start, min(start + _BATCH, cfg.num_models))
        for start in range(0, cfg.num_models, _BATCH)
    ]
    if threads > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda span: run_batch(*span), batches))
    else:
        results = [run_batch(*span) for span in batches]

    sum_in = np.zeros((n, m))
    sum_all = np.zeros(m)
    count_in = np.zeros(n, dtype=np.int64)
    for members, scores in results:
        sum_in += members.T @ scores
        sum_all += scores.sum(axis=0)
        count_in += members.sum(axis=0).astype(np.int64)

    count_out = cfg.num_models - count_in
    undefined = (count_in == 0) | (count_out == 0)
    entries = np.zeros((n, m))
    ok = ~undefined
    if ok.any():
        mean_in = sum_in[ok] / count_in[ok, None]
        mean_out = (sum_all[None, :] - sum_in[ok]) / count_out[ok, None]
        entries[ok] = mean_in - mean_out
    np.clip(entries, -1.0, 1.0, out=entries)
    return AttributionMatrix.from_dense(
        entries, cfg.p, cfg.num_models, cfg.seed, count_in, count_out, undefined
    )


def banzhaf_from_T(matrix: AttributionMatrix) -> ValueVector:
    """Scalar data values as row means of the attribution matrix."""
    return ValueVector(
        matrix.row_means(),
        "banzhaf-from-attribution",
        metadata={"p": matrix.p, "num_models": matrix.num_models, "seed": matrix.seed},
    )


def sparsify(matrix: AttributionMatrix, keep_fraction: float) -> AttributionMatrix:
    """Keep the ceil(keep_fraction * n * m) largest-magnitude entries.

    Dropped entries become exact zeros. Ties at the cutoff magnitude are
    resolved in (row, col) lexicographic order.
    """
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError("keep_fraction must lie in (0, 1]")
    keep = int(np.ceil(keep_fraction * matrix.n_train * matrix.n_val))
    rows, cols, vals = matrix.triplets()
    order = np.lexsort((cols, rows, -np.abs(vals)))
    kept = order[: min(keep, len(order))]
    return AttributionMatrix(
        matrix.n_train,
        matrix.n_val,
        rows[kept],
        cols[kept],
        vals[kept],
        matrix.p,
        matrix.num_models,
        matrix.seed,
        matrix.counts_in,
        matrix.counts_out,
        matrix.undefined,
    )


def save_T(matrix: AttributionMatrix, path: str) -> None:
    """Write the matrix in the ``CDVM-T v1`` text format.

    Line 1: ``CDVM-T v1 n m nnz p num_models seed``; then one
    ``i j value`` line per stored entry with 17 significant digits, which
    makes a save/load round trip bit-exact.
    """
    rows, cols, vals = matrix.triplets()
    with open(path, "w") as fh:
        fh.write(
            f"{_FILE_MAGIC} {_FILE_VERSION} {matrix.n_train} {matrix.n_val} "
            f"{matrix.nnz} {matrix.p:.17g} {matrix.num_models} {matrix.seed}\n"
        )
        for i, j, v in zip(rows, cols, vals):
            fh.write(f"{i} {j} {v:.17g}\n")


def load_T(path: str) -> AttributionMatrix:
    """Read a matrix written by :func:`save_T`.

    Raises ``ValueError`` on a malformed header, wrong entry count, indices
    out of range, or entries outside [-1, 1].
    """
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 8 or header[0] != _FILE_MAGIC or header[1] != _FILE_VERSION:
            raise ValueError(f"malformed attribution file header in {path!r}")
        try:
            n, m, nnz = int(header[2]), int(header[3]), int(header[4])
            p = float(header[5])
            num_models = int(header[6])
            seed = int(header[7])
        except ValueError as exc:
            raise ValueError(f"malformed attribution file header in {path!r}") from exc
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz, dtype=np.float64)
        for k in range(nnz):
            parts = fh.readline().split()
            if len(parts) != 3:
                raise ValueError(f"truncated attribution file: {path!r}")
            rows[k], cols[k], vals[k] = int(parts[0]), int(parts[1]), float(parts[2])
        if fh.readline().strip():
            raise ValueError(f"trailing data after {nnz} entries in {path!r}")
    return AttributionMatrix(n, m, rows, cols, vals, p, num_models, seed)
