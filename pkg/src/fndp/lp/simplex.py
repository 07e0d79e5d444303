"""Bounded-variable revised simplex.

Rows are turned into equalities with bounded slacks (``<=`` rows get a slack in
``[0, inf)``, ``>=`` rows one in ``(-inf, 0]``, equality rows a fixed slack) and
the method works on ``[A I] [x; s] = rhs``.  Phase 1 minimises the sum of
artificials attached to rows the initial point violates; its optimal row duals
are the infeasibility certificate when the minimum is positive.  Phase 2 runs on
the same basis with the artificials frozen at zero.

The basis inverse is kept as a sparse LU factorisation plus a product-form eta
file, refactorised every ``refactor_every`` pivots.  Entering columns use
Dantzig pricing and fall back to Bland's rule once ``bland_after`` consecutive
degenerate pivots have been seen.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .model import (EQ, GE, LE, LinearProgram, LPError, LPOutcome, Status,
                    farkas_margin)

_PIVOT_TOL = 1e-9
_OPT_TOL = 1e-9
_FEAS_TOL = 1e-9

# nonbasic position flags
_AT_LB, _AT_UB, _FREE = 0, 1, 2


class _Basis:
    """Sparse LU of the basis matrix with an eta file on top."""

    def __init__(self, M: sp.csc_matrix, head: np.ndarray):
        self.M = M
        self.m = M.shape[0]
        self.refactor(head)

    def refactor(self, head: np.ndarray) -> None:
        B = self.M[:, head].tocsc()
        try:
            self.lu = spla.splu(B, permc_spec="COLAMD")
        except RuntimeError as exc:  # singular basis
            raise LPError(f"singular basis during refactorisation: {exc}") from None
        self.etas: list[tuple[int, np.ndarray]] = []

    def ftran(self, a: np.ndarray) -> np.ndarray:
        x = self.lu.solve(a)
        for r, eta in self.etas:
            xr = x[r]
            if xr != 0.0:
                x = x + eta * xr
                x[r] = eta[r] * xr
        return x

    def btran(self, c: np.ndarray) -> np.ndarray:
        y = c.astype(float).copy()
        for r, eta in reversed(self.etas):
            y[r] = float(np.dot(eta, y))
        return self.lu.solve(y, trans="T")

    def push(self, r: int, alpha: np.ndarray) -> None:
        eta = -alpha / alpha[r]
        eta[r] = 1.0 / alpha[r]
        self.etas.append((r, eta))


class RevisedSimplex:
    def __init__(self, lp: LinearProgram, bland_after: int = 1000,
                 refactor_every: int = 100, max_iter: int = 100000):
        lp.validate()
        self.lp = lp
        self.bland_after = bland_after
        self.refactor_every = refactor_every
        self.max_iter = max_iter
        m, n = lp.A.shape
        self.m, self.n = m, n
        slack_lb = np.where(lp.sense == GE, -np.inf, 0.0)
        slack_ub = np.where(lp.sense == LE, np.inf, 0.0)
        self.lb = np.concatenate([lp.lb, slack_lb.astype(float)])
        self.ub = np.concatenate([lp.ub, slack_ub.astype(float)])
        self.iterations = 0

    # -------------------------------------------------------------------
    def _nonbasic_value(self, j: int) -> tuple[float, int]:
        lo, hi = self.lb[j], self.ub[j]
        if np.isfinite(lo):
            return lo, _AT_LB
        if np.isfinite(hi):
            return hi, _AT_UB
        return 0.0, _FREE

    def solve(self) -> LPOutcome:
        lp = self.lp
        m, n = self.m, self.n
        A = lp.A.tocsc()
        ns = n + m
        x = np.zeros(ns + m)
        state = np.full(ns + m, _AT_LB, dtype=int)
        for j in range(ns):
            x[j], state[j] = self._nonbasic_value(j)
        resid = lp.rhs - A @ x[:n] - x[n:ns]
        art_sign = np.ones(m)
        head = np.empty(m, dtype=int)
        art_cols = []
        for i in range(m):
            s = n + i
            lo, hi = self.lb[s], self.ub[s]
            if lo - _FEAS_TOL <= x[s] + resid[i] <= hi + _FEAS_TOL and lo != hi:
                x[s] += resid[i]
                head[i] = s
            else:
                art_sign[i] = 1.0 if resid[i] >= 0 else -1.0
                head[i] = ns + i
                x[ns + i] = abs(resid[i])
                art_cols.append(i)
        self.M = sp.hstack([A, sp.identity(m, format="csc"),
                            sp.diags(art_sign, format="csc")], format="csc")
        lb = np.concatenate([self.lb, np.zeros(m)])
        ub = np.concatenate([self.ub, np.where(np.isin(np.arange(m), art_cols), np.inf, 0.0)])
        self._lb, self._ub = lb, ub
        self.x, self.state, self.head = x, state, head
        self.is_basic = np.zeros(ns + m, dtype=bool)
        self.is_basic[head] = True
        self.basis = _Basis(self.M, head)

        if art_cols:
            c1 = np.zeros(ns + m)
            c1[ns:] = 1.0
            status = self._run(c1)
            if status == "iterlimit":
                raise LPError("iteration limit reached in phase 1")
            infeas = float(np.sum(self.x[ns:]))
            y1 = self.basis.btran(c1[self.head])
            tol = _FEAS_TOL * (1.0 + float(np.max(np.abs(lp.rhs))) if m else 1.0)
            if infeas > tol:
                margin = farkas_margin(lp, y1)
                return LPOutcome(Status.INFEASIBLE, farkas=y1, farkas_margin=margin,
                                 iterations=self.iterations, backend="simplex",
                                 info={"phase1_objective": infeas})
            self._ub[ns:] = 0.0  # freeze artificials
            self.x[ns:] = np.where(self.is_basic[ns:], self.x[ns:], 0.0)

        c2 = np.zeros(ns + m)
        c2[:n] = lp.c
        status = self._run(c2)
        if status == "unbounded":
            return LPOutcome(Status.UNBOUNDED, iterations=self.iterations, backend="simplex")
        if status == "iterlimit":
            raise LPError("iteration limit reached in phase 2")
        self.basis.refactor(self.head)
        xb = self.basis.ftran(lp.rhs - self.M[:, ~self.is_basic] @ self.x[~self.is_basic])
        self.x[self.head] = xb
        y = self.basis.btran(c2[self.head])
        xs = self.x[:n].copy()
        d = lp.c - A.T @ y
        obj = float(lp.c @ xs)
        return LPOutcome(Status.OPTIMAL, primal=xs, objective=obj, duals=y, reduced_costs=d,
                         iterations=self.iterations, backend="simplex")

    # -------------------------------------------------------------------
    def _run(self, c: np.ndarray) -> str:
        M = self.M
        lb, ub = self._lb, self._ub
        degenerate = 0
        since_refactor = 0
        total = c.shape[0]
        while True:
            if self.iterations >= self.max_iter:
                return "iterlimit"
            y = self.basis.btran(c[self.head])
            d = c - M.T @ y
            bland = degenerate >= self.bland_after
            q, direction = self._price(d, bland, lb, ub, total)
            if q < 0:
                return "optimal"
            alpha = self.basis.ftran(M[:, [q]].toarray().ravel())
            # basic vars move by -direction * theta * alpha
            theta = ub[q] - lb[q] if np.isfinite(ub[q] - lb[q]) else np.inf
            leave = -1
            leave_to_ub = False
            best_pivot = 0.0
            xb = self.x[self.head]
            for r in range(self.m):
                a = direction * alpha[r]
                if abs(a) <= _PIVOT_TOL:
                    continue
                j = self.head[r]
                if a > 0:
                    if not np.isfinite(lb[j]):
                        continue
                    t = (xb[r] - lb[j]) / a
                    to_ub = False
                else:
                    if not np.isfinite(ub[j]):
                        continue
                    t = (xb[r] - ub[j]) / a
                    to_ub = True
                t = max(t, 0.0)
                if t < theta - 1e-12 or (
                        t <= theta + 1e-12 and leave >= 0 and (
                            (bland and j < self.head[leave]) or
                            (not bland and abs(a) > best_pivot))):
                    theta, leave, leave_to_ub, best_pivot = t, r, to_ub, abs(a)
            if not np.isfinite(theta):
                return "unbounded"
            self.iterations += 1
            degenerate = degenerate + 1 if theta <= 1e-12 else 0
            step = direction * theta
            self.x[self.head] = xb - step * alpha
            self.x[q] += step
            if leave < 0:
                # bound flip of the entering variable
                self.state[q] = _AT_UB if direction > 0 else _AT_LB
                self.x[q] = ub[q] if direction > 0 else lb[q]
                continue
            j_out = self.head[leave]
            self.x[j_out] = ub[j_out] if leave_to_ub else lb[j_out]
            self.state[j_out] = _AT_UB if leave_to_ub else _AT_LB
            self.is_basic[j_out] = False
            self.is_basic[q] = True
            self.head[leave] = q
            since_refactor += 1
            if since_refactor >= self.refactor_every:
                self.basis.refactor(self.head)
                since_refactor = 0
                nb = ~self.is_basic
                self.x[self.head] = self.basis.ftran(self.lp_rhs() - M[:, nb] @ self.x[nb])
            else:
                self.basis.push(leave, alpha)

    def lp_rhs(self) -> np.ndarray:
        return self.lp.rhs

    def _price(self, d, bland, lb, ub, total):
        best, q, direction = 0.0, -1, 0
        for j in range(total):
            if self.is_basic[j] or lb[j] == ub[j]:
                continue
            dj = d[j]
            st = self.state[j]
            if st == _AT_LB and dj < -_OPT_TOL:
                cand = 1
            elif st == _AT_UB and dj > _OPT_TOL:
                cand = -1
            elif st == _FREE and abs(dj) > _OPT_TOL:
                cand = -1 if dj > 0 else 1
            else:
                continue
            if bland:
                return j, cand
            if abs(dj) > best:
                best, q, direction = abs(dj), j, cand
        return q, direction


def solve_simplex(lp: LinearProgram, bland_after: int = 1000,
                  refactor_every: int = 100, max_iter: int = 100000) -> LPOutcome:
    return RevisedSimplex(lp, bland_after, refactor_every, max_iter).solve()
