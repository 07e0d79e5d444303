"""HiGHS-backed solves with the same outcome contract as the in-house simplex.

The subproblem LPs are large (tens of thousands of rows) and are re-solved many
times with only the right-hand side changing, so :class:`HighsSession` keeps
one model loaded and warm-starts every solve from the previous basis.
Infeasibility certificates come from an elastic phase-1 LP whose row duals are
a Farkas ray for the original rows.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

import highspy

from .model import EQ, GE, LE, LinearProgram, LPError, LPOutcome, Status, farkas_margin

_INF = highspy.kHighsInf
_TOL = 1e-9


def _row_bounds(sense: np.ndarray, rhs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lo = np.where(sense == LE, -_INF, rhs)
    hi = np.where(sense == GE, _INF, rhs)
    return lo.astype(float), hi.astype(float)


def _col_bounds(lb, ub):
    return (np.where(np.isfinite(lb), lb, -_INF).astype(float),
            np.where(np.isfinite(ub), ub, _INF).astype(float))


METHODS = ("simplex", "ipm", "hybrid")


def _new_highs(time_limit: float | None = None, method: str = "simplex") -> highspy.Highs:
    if method not in METHODS:
        raise LPError(f"unknown HiGHS method {method!r}; expected one of {METHODS}")
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("primal_feasibility_tolerance", _TOL)
    h.setOptionValue("dual_feasibility_tolerance", _TOL)
    h.setOptionValue("random_seed", 0)
    h.setOptionValue("threads", 1)
    if time_limit is not None:
        h.setOptionValue("time_limit", float(time_limit))
    if method in ("ipm", "hybrid"):
        # interior point followed by crossover, so duals are still basic
        h.setOptionValue("solver", "ipm")
        h.setOptionValue("run_crossover", "on")
    return h


def _load(h: highspy.Highs, c, A: sp.csr_matrix, row_lo, row_hi, col_lo, col_hi) -> None:
    model = highspy.HighsLp()
    m, n = A.shape
    model.num_col_ = n
    model.num_row_ = m
    model.col_cost_ = np.asarray(c, float)
    model.col_lower_ = col_lo
    model.col_upper_ = col_hi
    model.row_lower_ = row_lo
    model.row_upper_ = row_hi
    A = A.tocsc()
    model.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    model.a_matrix_.start_ = A.indptr.astype(np.int32)
    model.a_matrix_.index_ = A.indices.astype(np.int32)
    model.a_matrix_.value_ = A.data.astype(float)
    h.passModel(model)


def elastic_farkas(lp: LinearProgram) -> tuple[np.ndarray, float]:
    """Solve the elastic phase-1 LP; return (row duals, minimum total violation)."""
    m, n = lp.A.shape
    le = np.flatnonzero(lp.sense == LE)
    ge = np.flatnonzero(lp.sense == GE)
    eq = np.flatnonzero(lp.sense == EQ)
    rows = np.concatenate([le, ge, eq, eq])
    vals = np.concatenate([-np.ones(le.size), np.ones(ge.size), np.ones(eq.size), -np.ones(eq.size)])
    E = sp.csr_matrix((vals, (rows, np.arange(rows.size))), shape=(m, rows.size))
    A1 = sp.hstack([lp.A, E], format="csr")
    c1 = np.concatenate([np.zeros(n), np.ones(rows.size)])
    col_lo, col_hi = _col_bounds(np.concatenate([lp.lb, np.zeros(rows.size)]),
                                 np.concatenate([lp.ub, np.full(rows.size, np.inf)]))
    h = _new_highs()
    _load(h, c1, A1, *_row_bounds(lp.sense, lp.rhs), col_lo, col_hi)
    h.run()
    if h.getModelStatus() != highspy.HighsModelStatus.kOptimal:
        raise LPError(f"elastic phase 1 did not solve: {h.getModelStatus()}")
    sol = h.getSolution()
    return np.asarray(sol.row_dual, float), float(h.getInfo().objective_function_value)


class HighsSession:
    """A loaded LP whose right-hand side can be swapped between solves.

    With ``method="simplex"`` each solve warm-starts from the previous basis.
    ``"ipm"`` solves from scratch with an interior-point method plus crossover,
    which is much faster cold on the heavily degenerate congested subproblems
    but lands on an arbitrary optimal vertex each time.  ``"hybrid"`` uses the
    interior-point method whenever there is no basis to start from and
    warm-started dual simplex otherwise, so consecutive solves at nearby
    right-hand sides tend to stay on neighbouring vertices.
    """

    def __init__(self, lp: LinearProgram, time_limit: float | None = None, method: str = "simplex"):
        lp.validate()
        self.lp = lp
        self.method = method
        self.h = _new_highs(time_limit, method)
        _load(self.h, lp.c, lp.A, *_row_bounds(lp.sense, lp.rhs), *_col_bounds(lp.lb, lp.ub))
        self._rhs = lp.rhs.copy()
        self._idx = np.arange(lp.num_rows, dtype=np.int32)

    def solve(self, rhs: np.ndarray | None = None) -> LPOutcome:
        if rhs is not None:
            rhs = np.asarray(rhs, float)
            if rhs.shape != self._rhs.shape:
                raise LPError("rhs length does not match the loaded model")
            changed = np.flatnonzero(rhs != self._rhs)
            if changed.size:
                lo, hi = _row_bounds(self.lp.sense[changed], rhs[changed])
                self.h.changeRowsBounds(changed.size, self._idx[changed], lo, hi)
                self._rhs = rhs.copy()
        lp = self.lp if rhs is None else self.lp.with_rhs(self._rhs)
        if self.method == "hybrid":
            warm = self.h.getBasis().valid
            self.h.setOptionValue("solver", "simplex" if warm else "ipm")
        self.h.run()
        status = self.h.getModelStatus()
        it = int(self.h.getInfo().simplex_iteration_count)
        S = highspy.HighsModelStatus
        if status == S.kOptimal:
            sol = self.h.getSolution()
            x = np.asarray(sol.col_value, float)
            return LPOutcome(Status.OPTIMAL, primal=x, objective=float(lp.c @ x),
                             duals=np.asarray(sol.row_dual, float),
                             reduced_costs=np.asarray(sol.col_dual, float),
                             iterations=it, backend="highs")
        if status in (S.kInfeasible, S.kUnboundedOrInfeasible):
            ray, viol = elastic_farkas(lp)
            if viol > _TOL * (1.0 + float(np.max(np.abs(lp.rhs), initial=0.0))):
                # a failed solve leaves a useless basis behind
                self.h.clearSolver()
                return LPOutcome(Status.INFEASIBLE, farkas=ray, farkas_margin=farkas_margin(lp, ray),
                                 iterations=it, backend="highs", info={"phase1_objective": viol})
            return LPOutcome(Status.UNBOUNDED, iterations=it, backend="highs")
        if status == S.kUnbounded:
            return LPOutcome(Status.UNBOUNDED, iterations=it, backend="highs")
        raise LPError(f"HiGHS returned status {status}")


def solve_highs(lp: LinearProgram, time_limit: float | None = None, method: str = "simplex") -> LPOutcome:
    return HighsSession(lp, time_limit, method).solve()
