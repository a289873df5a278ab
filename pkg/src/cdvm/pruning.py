"""Budget-constrained subset selection over an attribution matrix.

The selector maximizes total influence on the validation set while
penalizing influence above a per-instance threshold:

    max  alpha * sum_j v_j - (1 - alpha) * sum_j t_j
    s.t. v = T' w,  sum_i w_i = S,  0 <= w_i <= 1,
         t_j >= 0,  t_j >= v_j - kappa

The binary selection is relaxed to the box [0, 1] and solved with the
in-repo bounded-variable simplex; the retained set is the top-S entries
of w. An exact enumeration mode over all C(n, S) binary selections is
provided as an oracle for small instances.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .attribution import AttributionMatrix
from .simplex import LpResult, solve_bounded_lp

ENUMERATION_LIMIT = 20
_FRACTIONAL_TOL = 1e-9


class SolverError(RuntimeError):
    """Raised when the LP solver fails to reach an optimum."""


@dataclass(frozen=True)
class CdvmProblem:
    """One selection instance: matrix, retention budget and trade-offs."""

    matrix: AttributionMatrix
    budget: int
    alpha: float
    kappa: float
    integrality: str = "relaxed"

    def __post_init__(self) -> None:
        if not 1 <= self.budget <= self.matrix.n_train:
            raise ValueError(
                f"budget must lie in [1, {self.matrix.n_train}], got {self.budget}"
            )
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not self.kappa >= 0.0:
            raise ValueError("kappa must be nonnegative")
        if self.integrality not in ("relaxed", "exact-enumeration"):
            raise ValueError(f"unknown integrality mode: {self.integrality!r}")


@dataclass
class CdvmSolution:
    """Solved instance: selection weights, slacks and the rounded set."""

    w: np.ndarray
    v: np.ndarray
    t: np.ndarray
    objective: float
    selected: np.ndarray
    fractional_count: int
    solver_status: str
    budget: int
    alpha: float
    kappa: float
    warm_start: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    def to_json_dict(self) -> dict:
        return {
            "S": int(self.budget),
            "alpha": float(self.alpha),
            "kappa": float(self.kappa),
            "objective": float(self.objective),
            "selected": [int(i) for i in self.selected],
            "fractional_count": int(self.fractional_count),
        }


def build_problem(
    matrix: AttributionMatrix, budget: int, alpha: float, kappa: float
) -> CdvmProblem:
    """Validate and package a relaxed selection instance."""
    return CdvmProblem(matrix, int(budget), float(alpha), float(kappa))


def round_top_s(solution: "CdvmSolution | np.ndarray", budget: int) -> np.ndarray:
    """Indices of the S largest selection weights, ties to the lowest index.

    The result is sorted ascending.
    """
    w = solution.w if isinstance(solution, CdvmSolution) else np.asarray(solution)
    order = np.lexsort((np.arange(len(w)), -w))
    return np.sort(order[:budget])


def _assemble(
    matrix: AttributionMatrix, budget: int, alpha: float, kappa: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Build (objective, constraints, rhs, lower, upper) for the solver.

    Variables are [w (n), t (m), row slacks (m)]; rows are the budget
    equality followed by one capped-influence row per validation instance:
    T[:, j] @ w - t_j + s_j = kappa.
    """
    dense = matrix.dense()
    n, m = matrix.shape
    total = n + 2 * m
    constraints = np.zeros((m + 1, total))
    constraints[0, :n] = 1.0
    constraints[1:, :n] = dense.T
    constraints[1:, n : n + m] = -np.eye(m)
    constraints[1:, n + m :] = np.eye(m)
    rhs = np.concatenate([[float(budget)], np.full(m, kappa)])
    objective = np.zeros(total)
    objective[:n] = alpha * dense.sum(axis=1)
    objective[n : n + m] = -(1.0 - alpha)
    lower = np.zeros(total)
    upper = np.concatenate([np.ones(n), np.full(2 * m, np.inf)])
    return objective, constraints, rhs, lower, upper


def _objective_value(v: np.ndarray, alpha: float, kappa: float) -> float:
    return float(alpha * v.sum() - (1.0 - alpha) * np.clip(v - kappa, 0.0, None).sum())


def _greedy_selection(
    dense: np.ndarray, budget: int, alpha: float, kappa: float
) -> tuple[np.ndarray, float]:
    """Best-marginal-gain selection of ``budget`` rows, ties to lowest index.

    For alpha >= 0.5 the objective is monotone submodular in the selected
    set, so this greedy is the natural integral heuristic; on block-structured
    matrices with kappa at the smallest block level it attains the LP optimum
    with one representative per block.
    """
    n, _ = dense.shape
    v = np.zeros(dense.shape[1])
    current = 0.0
    remaining = np.ones(n, dtype=bool)
    chosen: list[int] = []
    for _ in range(budget):
        candidates = np.flatnonzero(remaining)
        cand_v = v[None, :] + dense[candidates]
        gains = (
            alpha * cand_v.sum(axis=1)
            - (1.0 - alpha) * np.clip(cand_v - kappa, 0.0, None).sum(axis=1)
            - current
        )
        pick = int(candidates[np.argmax(gains)])
        chosen.append(pick)
        v = v + dense[pick]
        current = _objective_value(v, alpha, kappa)
        remaining[pick] = False
    w = np.zeros(n)
    w[chosen] = 1.0
    return w, current


def _solution_from_lp(
    problem: CdvmProblem, res: LpResult, n: int, m: int
) -> CdvmSolution:
    w = res.x[:n]
    t = res.x[n : n + m]
    v = problem.matrix.dense().T @ w
    objective = problem.alpha * float(v.sum()) - (1.0 - problem.alpha) * float(t.sum())
    fractional = int(np.sum((w > _FRACTIONAL_TOL) & (w < 1.0 - _FRACTIONAL_TOL)))
    return CdvmSolution(
        w=w,
        v=v,
        t=t,
        objective=objective,
        selected=round_top_s(w, problem.budget),
        fractional_count=fractional,
        solver_status=res.status,
        budget=problem.budget,
        alpha=problem.alpha,
        kappa=problem.kappa,
        warm_start=(res.basis, res.var_status),
    )


def solve_lp(
    problem: CdvmProblem,
    warm_start: tuple[np.ndarray, np.ndarray] | None = None,
) -> CdvmSolution:
    """Solve the relaxed instance to optimality.

    The instance is always feasible (w = S/n is interior), so an infeasible
    status indicates a solver defect and trips an assertion; hitting the
    iteration limit raises :class:`SolverError`.

    Among equally good optima, an integral one is preferred: when the greedy
    selection attains the simplex objective, its binary indicator (itself an
    optimal basic solution of the relaxation) is returned. On degenerate
    optimal faces this keeps the top-S rounding from depending on whichever
    vertex the pivot path happened to reach.
    """
    if problem.integrality != "relaxed":
        raise ValueError("solve_lp expects a relaxed problem; use enumerate_exact")
    n, m = problem.matrix.shape
    arrays = _assemble(problem.matrix, problem.budget, problem.alpha, problem.kappa)
    res = solve_bounded_lp(*arrays, start=warm_start)
    assert res.status != "infeasible", "budget LP cannot be infeasible"
    if res.status != "optimal":
        raise SolverError(f"LP solve failed with status {res.status!r}")
    dense = problem.matrix.dense()
    greedy_w, greedy_obj = _greedy_selection(
        dense, problem.budget, problem.alpha, problem.kappa
    )
    if greedy_obj >= res.objective - 1e-9 * (1.0 + abs(res.objective)):
        v = dense.T @ greedy_w
        return CdvmSolution(
            w=greedy_w,
            v=v,
            t=np.clip(v - problem.kappa, 0.0, None),
            objective=greedy_obj,
            selected=round_top_s(greedy_w, problem.budget),
            fractional_count=0,
            solver_status="optimal",
            budget=problem.budget,
            alpha=problem.alpha,
            kappa=problem.kappa,
            warm_start=(res.basis, res.var_status),
        )
    return _solution_from_lp(problem, res, n, m)


def enumerate_exact(problem: CdvmProblem) -> CdvmSolution:
    """Exact binary optimum by enumerating all C(n, S) selections (n <= 20).

    Slack variables are eliminated analytically (t_j = max(v_j - kappa, 0)),
    so this is an independent oracle for the LP path. Objective ties resolve
    to the lexicographically smallest selection.
    """
    n, m = problem.matrix.shape
    if n > ENUMERATION_LIMIT:
        raise ValueError(f"enumeration is limited to {ENUMERATION_LIMIT} players, got {n}")
    dense = problem.matrix.dense()
    alpha, kappa = problem.alpha, problem.kappa
    best: tuple[float, tuple[int, ...]] | None = None
    for combo in itertools.combinations(range(n), problem.budget):
        v = dense[list(combo)].sum(axis=0)
        obj = alpha * v.sum() - (1.0 - alpha) * np.clip(v - kappa, 0.0, None).sum()
        if best is None or obj > best[0] + 1e-12:
            best = (float(obj), combo)
    assert best is not None
    selected = np.array(best[1], dtype=np.int64)
    w = np.zeros(n)
    w[selected] = 1.0
    v = dense.T @ w
    t = np.clip(v - kappa, 0.0, None)
    return CdvmSolution(
        w=w,
        v=v,
        t=t,
        objective=best[0],
        selected=selected,
        fractional_count=0,
        solver_status="optimal",
        budget=problem.budget,
        alpha=alpha,
        kappa=kappa,
    )


def solve(problem: CdvmProblem) -> CdvmSolution:
    """Dispatch on the problem's integrality mode."""
    if problem.integrality == "relaxed":
        return solve_lp(problem)
    return enumerate_exact(problem)


def default_kappa(matrix: AttributionMatrix, budget: int) -> float:
    """Data-adaptive threshold: max entry plus budget times mean entry.

    Both statistics run over all n * m entries of the matrix, implicit
    zeros included, so sparsifying the matrix changes them continuously.
    """
    return matrix.max_entry() + budget * matrix.mean_entry()


def candidate_kappas(matrix: AttributionMatrix, budget: int) -> list[float]:
    """A small default grid of thresholds for :func:`grid_search`.

    Each training instance's strongest per-test influence (its row maximum)
    estimates the influence level of whatever group it supports, so
    quantiles of the positive row maxima bracket the useful cap range; the
    smallest of them plays the role of the weakest group's level. The
    adaptive default is always included.
    """
    row_max = matrix.dense().max(axis=1) if matrix.n_train else np.array([])
    positive = row_max[row_max > 0]
    candidates = {default_kappa(matrix, budget)}
    if positive.size:
        for q in (0.0, 0.25, 0.5, 0.75, 1.0):
            candidates.add(float(np.quantile(positive, q)))
    return sorted(c for c in candidates if c >= 0.0)


DEFAULT_ALPHAS = (0.1, 0.3, 0.5, 0.7, 0.9)


def grid_search(
    matrix: AttributionMatrix,
    budget: int,
    alphas: Sequence[float],
    kappas: Sequence[float],
    evaluator: Callable[[np.ndarray], float],
) -> tuple[float, float, CdvmSolution]:
    """Pick the (alpha, kappa) pair whose rounded selection scores best.

    ``evaluator`` maps a selected index set to a score (typically validation
    accuracy of a model retrained on it). Score ties prefer the smaller
    kappa, then the larger alpha. The constraint matrix is assembled once
    and each solve warm-starts from the previous basis.
    """
    if not alphas or not kappas:
        raise ValueError("alpha and kappa grids must be nonempty")
    best: tuple[float, float, float, CdvmSolution] | None = None
    warm: tuple[np.ndarray, np.ndarray] | None = None
    for alpha in alphas:
        for kappa in kappas:
            problem = build_problem(matrix, budget, alpha, kappa)
            solution = solve_lp(problem, warm_start=warm)
            warm = solution.warm_start
            score = float(evaluator(solution.selected))
            if (
                best is None
                or score > best[0]
                or (score == best[0] and (kappa, -alpha) < (best[2], -best[1]))
            ):
                best = (score, alpha, kappa, solution)
    assert best is not None
    return best[1], best[2], best[3]


@dataclass(frozen=True)
class ClusterBlocks:
    """Block-structured attribution model of a clustered problem.

    Train cluster k influences exactly its own test cluster, every entry of
    the block carrying the same level ``taus[k]``.
    """

    cluster_sizes: tuple[int, ...]
    test_sizes: tuple[int, ...]
    taus: tuple[float, ...]

    def __post_init__(self) -> None:
        if not len(self.cluster_sizes) == len(self.test_sizes) == len(self.taus):
            raise ValueError("block parameter lists must have equal length")
        if any(s < 1 for s in self.cluster_sizes) or any(m < 1 for m in self.test_sizes):
            raise ValueError("cluster and test sizes must be >= 1")
        if any(not t > 0 for t in self.taus):
            raise ValueError("block levels must be positive")

    @property
    def num_clusters(self) -> int:
        return len(self.cluster_sizes)

    @property
    def kappa_tau(self) -> float:
        return min(self.taus)

    def train_cluster_of(self) -> np.ndarray:
        return np.repeat(np.arange(self.num_clusters), self.cluster_sizes)

    def matrix(self) -> AttributionMatrix:
        n = int(np.sum(self.cluster_sizes))
        m = int(np.sum(self.test_sizes))
        dense = np.zeros((n, m))
        row_edges = np.concatenate([[0], np.cumsum(self.cluster_sizes)])
        col_edges = np.concatenate([[0], np.cumsum(self.test_sizes)])
        for k, tau in enumerate(self.taus):
            dense[row_edges[k] : row_edges[k + 1], col_edges[k] : col_edges[k + 1]] = tau
        return AttributionMatrix.from_dense(dense, p=0.5, num_models=0)


def surrogate_objective(
    blocks: ClusterBlocks, selection_counts: Sequence[int], kappa: float
) -> float:
    """Cluster-coverage surrogate: sum_k m_k * min(tau_k * s_k, kappa)."""
    counts = np.asarray(selection_counts, dtype=np.float64)
    sizes = np.asarray(blocks.cluster_sizes, dtype=np.float64)
    if counts.shape != sizes.shape:
        raise ValueError("selection counts must have one entry per cluster")
    if np.any(counts < 0) or np.any(counts > sizes):
        raise ValueError("selection counts must lie in [0, n_k]")
    taus = np.asarray(blocks.taus)
    tests = np.asarray(blocks.test_sizes, dtype=np.float64)
    return float(np.sum(tests * np.minimum(taus * counts, kappa)))


@dataclass(frozen=True)
class CoverageReport:
    """Per-cluster selection counts and whether every cluster is covered."""

    counts: np.ndarray
    all_covered: bool


def verify_cluster_coverage(
    selected: Iterable[int], cluster_of: np.ndarray | Mapping[int, int]
) -> CoverageReport:
    """Count selected members per cluster and flag full coverage."""
    if isinstance(cluster_of, Mapping):
        assignment = np.array([cluster_of[k] for k in sorted(cluster_of)], dtype=np.int64)
    else:
        assignment = np.asarray(cluster_of, dtype=np.int64)
    num_clusters = int(assignment.max()) + 1 if assignment.size else 0
    sel = np.asarray(list(selected), dtype=np.int64)
    counts = np.bincount(assignment[sel], minlength=num_clusters) if sel.size else np.zeros(
        num_clusters, dtype=np.int64
    )
    return CoverageReport(counts=counts, all_covered=bool(np.all(counts >= 1)))


def save_solution(solution: CdvmSolution, path: str) -> None:
    """Write a solution as JSON with keys S, alpha, kappa, objective,
    selected and fractional_count."""
    with open(path, "w") as fh:
        json.dump(solution.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_solution_dict(path: str) -> dict:
    """Read a solution JSON written by :func:`save_solution`."""
    with open(path) as fh:
        payload = json.load(fh)
    for key in ("S", "alpha", "kappa", "objective", "selected", "fractional_count"):
        if key not in payload:
            raise ValueError(f"solution file {path!r} is missing key {key!r}")
    return payload
