"""Dense bounded-variable primal simplex.

Solves ``max c @ x`` subject to ``A x = b`` and ``lower <= x <= upper``
with a two-phase method. Nonbasic variables rest at a bound; entering
variables are picked by largest reduced-cost violation, switching to
Bland's smallest-index rule once a run of degenerate pivots trips a
counter, which guarantees termination. All tie-breaks are by lowest
variable index, so a given instance always produces the same solution.

The implementation keeps an explicit basis inverse updated by elementary
row operations and refactorizes periodically. It is intended for the
modest, well-scaled instances produced by this package, not as a general
purpose LP code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

AT_LOWER, AT_UPPER, BASIC = 0, 1, 2

_REFACTOR_EVERY = 64
_DEGENERACY_LIMIT = 40
_DEGENERATE_STEP = 1e-11
_RATIO_TIE = 1e-10


@dataclass
class LpResult:
    status: str  # "optimal" | "infeasible" | "iteration-limit" | "unbounded"
    x: np.ndarray
    objective: float
    iterations: int
    basis: np.ndarray
    var_status: np.ndarray


class _BoundedSimplex:
    def __init__(
        self,
        objective: np.ndarray,
        constraints: np.ndarray,
        rhs: np.ndarray,
        lower: np.ndarray,
        upper: np.ndarray,
        pivot_tol: float,
        opt_tol: float,
    ) -> None:
        self.n_struct = len(objective)
        self.m = constraints.shape[0]
        if not np.all(np.isfinite(lower)):
            raise ValueError("all lower bounds must be finite")
        # Artificial columns carry the initial basis; their signs make the
        # starting basic values nonnegative.
        start = lower.copy()
        resid = rhs - constraints @ start
        art_sign = np.where(resid >= 0, 1.0, -1.0)
        self.A = np.hstack([constraints, np.diag(art_sign)])
        self.b = rhs.astype(np.float64)
        self.lower = np.concatenate([lower, np.zeros(self.m)])
        self.upper = np.concatenate([upper, np.full(self.m, np.inf)])
        self.c = np.concatenate([objective, np.zeros(self.m)])
        self.n_total = self.n_struct + self.m
        self.pivot_tol = pivot_tol
        self.opt_tol = opt_tol

        self.x = np.concatenate([start, np.abs(resid)])
        self.basis = self.n_struct + np.arange(self.m)
        self.var_status = np.full(self.n_total, AT_LOWER, dtype=np.int8)
        self.var_status[self.basis] = BASIC
        self.binv = np.diag(art_sign)
        # Fixed variables (lower == upper) must never enter: a zero-span
        # bound flip would loop forever.
        self.enterable = self.upper - self.lower > 0
        self.iterations = 0
        self.pivots_since_refactor = 0

    # -- state maintenance ------------------------------------------------

    def refactorize(self) -> None:
        self.binv = np.linalg.inv(self.A[:, self.basis])
        nb_x = self.x.copy()
        nb_x[self.basis] = 0.0
        self.x[self.basis] = self.binv @ (self.b - self.A @ nb_x)
        self.pivots_since_refactor = 0

    def warm_start(self, basis: np.ndarray, var_status: np.ndarray, feas_tol: float) -> bool:
        """Adopt a previous basis if it is still primal feasible."""
        if len(basis) != self.m or len(var_status) != self.n_struct:
            return False
        if np.any(basis < 0) or np.any(basis >= self.n_struct):
            return False
        if np.any(var_status[basis] != BASIC):
            return False
        if np.sum(var_status == BASIC) != self.m:
            return False
        try:
            binv = np.linalg.inv(self.A[:, basis])
        except np.linalg.LinAlgError:
            return False
        x = np.where(var_status == AT_UPPER, self.upper[: self.n_struct],
                     self.lower[: self.n_struct])
        if not np.all(np.isfinite(x)):
            return False
        full = np.concatenate([x, np.zeros(self.m)])
        full[basis] = 0.0
        xb = binv @ (self.b - self.A @ full)
        if np.any(xb < self.lower[basis] - feas_tol) or np.any(xb > self.upper[basis] + feas_tol):
            return False
        full[basis] = xb
        self.x = full
        self.basis = basis.copy()
        self.var_status = np.concatenate(
            [var_status.astype(np.int8), np.full(self.m, AT_LOWER, dtype=np.int8)]
        )
        self.var_status[self.basis] = BASIC
        self.binv = binv
        self.enterable[self.n_struct:] = False
        self.pivots_since_refactor = 0
        return True

    # -- the core loop ----------------------------------------------------

    def optimize(self, cost: np.ndarray, max_iterations: int) -> str:
        degenerate_run = 0
        bland = False
        while True:
            if self.pivots_since_refactor >= _REFACTOR_EVERY:
                self.refactorize()
            y = cost[self.basis] @ self.binv
            reduced = cost - y @ self.A
            can_up = (self.var_status == AT_LOWER) & (reduced > self.opt_tol)
            can_down = (self.var_status == AT_UPPER) & (reduced < -self.opt_tol)
            eligible = (can_up | can_down) & self.enterable
            if not eligible.any():
                return "optimal"
            if self.iterations >= max_iterations:
                return "iteration-limit"
            self.iterations += 1
            if bland:
                entering = int(np.flatnonzero(eligible)[0])
            else:
                violation = np.where(eligible, np.abs(reduced), -np.inf)
                entering = int(np.argmax(violation))

            direction = 1.0 if self.var_status[entering] == AT_LOWER else -1.0
            col = self.binv @ self.A[:, entering]
            move = direction * col
            xb = self.x[self.basis]
            lb = self.basis_lower
            ub = self.basis_upper
            with np.errstate(divide="ignore", invalid="ignore"):
                toward_lower = np.where(move > self.pivot_tol, (xb - lb) / move, np.inf)
                toward_upper = np.where(move < -self.pivot_tol, (ub - xb) / (-move), np.inf)
            ratios = np.maximum(np.minimum(toward_lower, toward_upper), 0.0)
            min_ratio = ratios.min() if self.m else np.inf
            span = self.upper[entering] - self.lower[entering]

            if span <= min_ratio + _RATIO_TIE:
                if not np.isfinite(span):
                    return "unbounded"
                # Bound flip: the entering variable crosses to its other
                # bound before any basic variable blocks.
                step = span
                self.x[self.basis] = xb - move * step
                if direction > 0:
                    self.x[entering] = self.upper[entering]
                    self.var_status[entering] = AT_UPPER
                else:
                    self.x[entering] = self.lower[entering]
                    self.var_status[entering] = AT_LOWER
            else:
                step = min_ratio
                tie = ratios <= min_ratio + _RATIO_TIE * (1.0 + abs(min_ratio))
                candidates = np.flatnonzero(tie)
                row = int(candidates[np.argmin(self.basis[candidates])])
                leaving = int(self.basis[row])
                self.x[self.basis] = xb - move * step
                self.x[entering] = (
                    self.lower[entering] + step if direction > 0
                    else self.upper[entering] - step
                )
                if move[row] > 0:
                    self.x[leaving] = self.lower[leaving]
                    self.var_status[leaving] = AT_LOWER
                else:
                    self.x[leaving] = self.upper[leaving]
                    self.var_status[leaving] = AT_UPPER
                self.basis[row] = entering
                self.var_status[entering] = BASIC
                self._update_binv(col, row)
                self.pivots_since_refactor += 1

            if step <= _DEGENERATE_STEP:
                degenerate_run += 1
                if degenerate_run > _DEGENERACY_LIMIT:
                    bland = True
            else:
                degenerate_run = 0
                bland = False

    @property
    def basis_lower(self) -> np.ndarray:
        return self.lower[self.basis]

    @property
    def basis_upper(self) -> np.ndarray:
        return self.upper[self.basis]

    def _update_binv(self, col: np.ndarray, row: int) -> None:
        pivot = col[row]
        self.binv[row] /= pivot
        others = np.arange(self.m) != row
        self.binv[others] -= np.outer(col[others], self.binv[row])

    # -- phase orchestration ------------------------------------------------

    def drive_out_artificials(self) -> None:
        for row in range(self.m):
            if self.basis[row] < self.n_struct:
                continue
            tableau_row = self.binv[row] @ self.A[:, : self.n_struct]
            nonbasic = self.var_status[: self.n_struct] != BASIC
            usable = np.flatnonzero(nonbasic & (np.abs(tableau_row) > self.pivot_tol))
            if usable.size == 0:
                # Redundant constraint: pin the artificial at zero and keep
                # it basic; it can never move again.
                art = self.basis[row]
                self.upper[art] = 0.0
                continue
            entering = int(usable[0])
            col = self.binv @ self.A[:, entering]
            leaving = int(self.basis[row])
            self.basis[row] = entering
            self.var_status[entering] = BASIC
            self.var_status[leaving] = AT_LOWER
            self.x[leaving] = 0.0
            self._update_binv(col, row)
            self.pivots_since_refactor += 1


def solve_bounded_lp(
    objective: np.ndarray,
    constraints: np.ndarray,
    rhs: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    start: tuple[np.ndarray, np.ndarray] | None = None,
    max_iterations: int | None = None,
    feas_tol: float = 1e-7,
    pivot_tol: float = 1e-9,
    opt_tol: float = 1e-9,
) -> LpResult:
    """Maximize ``objective @ x`` over ``constraints @ x == rhs`` with bounds.

    ``start`` may carry ``(basis, var_status)`` from a previous solve of a
    problem with the same constraint matrix; it is adopted when still
    feasible, otherwise the solver falls back to a cold two-phase start.
    Returns an ``LpResult`` whose ``basis``/``var_status`` can seed the next
    warm start.
    """
    objective = np.asarray(objective, dtype=np.float64)
    constraints = np.asarray(constraints, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    m, n = constraints.shape
    if max_iterations is None:
        max_iterations = 10_000 + 40 * (m + n)

    state = _BoundedSimplex(objective, constraints, rhs, lower, upper, pivot_tol, opt_tol)

    warmed = False
    if start is not None:
        warmed = state.warm_start(start[0], start[1], feas_tol)

    if not warmed:
        phase1_cost = np.zeros(state.n_total)
        phase1_cost[state.n_struct:] = -1.0
        status = state.optimize(phase1_cost, max_iterations)
        if status != "optimal":
            return _result(state, status)
        infeasibility = float(np.sum(state.x[state.n_struct:]))
        if infeasibility > feas_tol:
            return _result(state, "infeasible")
        state.drive_out_artificials()
        state.enterable[state.n_struct:] = False
        state.refactorize()

    status = state.optimize(state.c, max_iterations)
    state.refactorize()
    return _result(state, status)


def _result(state: _BoundedSimplex, status: str) -> LpResult:
    x = state.x[: state.n_struct].copy()
    return LpResult(
        status=status,
        x=x,
        objective=float(state.c[: state.n_struct] @ x),
        iterations=state.iterations,
        basis=state.basis.copy(),
        var_status=state.var_status[: state.n_struct].copy(),
    )
