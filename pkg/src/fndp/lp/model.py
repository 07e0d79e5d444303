"""Linear program container, solve outcome, and certificate checks."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

EPS_FEAS = 1e-7
EPS_CS = 1e-7
EPS_GAP = 1e-6

LE, EQ, GE = "<=", "=", ">="
SENSES = (LE, EQ, GE)


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class LPError(ValueError):
    pass


@dataclass
class LinearProgram:
    """``min c'x`` subject to ``A x (sense) rhs`` and ``lb <= x <= ub``."""

    c: np.ndarray
    A: sp.csr_matrix
    sense: np.ndarray  # dtype object / str, one of SENSES per row
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.A = sp.csr_matrix(self.A, dtype=float)
        self.sense = np.asarray(self.sense, dtype=object)
        self.rhs = np.asarray(self.rhs, dtype=float)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)

    @property
    def num_vars(self) -> int:
        return self.c.shape[0]

    @property
    def num_rows(self) -> int:
        return self.rhs.shape[0]

    def validate(self) -> None:
        m, n = self.A.shape
        if self.c.shape != (n,) or self.lb.shape != (n,) or self.ub.shape != (n,):
            raise LPError(f"dimension mismatch: A is {m}x{n}, c/lb/ub have "
                          f"{self.c.shape}/{self.lb.shape}/{self.ub.shape}")
        if self.rhs.shape != (m,) or self.sense.shape != (m,):
            raise LPError(f"dimension mismatch: A has {m} rows, rhs/sense have "
                          f"{self.rhs.shape}/{self.sense.shape}")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.rhs))
                and np.all(np.isfinite(self.A.data))):
            raise LPError("non-finite coefficient in c, rhs or A")
        if np.any(np.isnan(self.lb)) or np.any(np.isnan(self.ub)):
            raise LPError("NaN variable bound")
        if np.any(self.lb > self.ub):
            raise LPError("lower bound exceeds upper bound")
        bad = [s for s in self.sense if s not in SENSES]
        if bad:
            raise LPError(f"unknown row sense {bad[0]!r}")

    def with_rhs(self, rhs: np.ndarray) -> "LinearProgram":
        return LinearProgram(self.c, self.A, self.sense, rhs, self.lb, self.ub)

    @classmethod
    def from_rows(cls, num_vars: int, objective: dict[int, float],
                  rows: Iterable[tuple[dict[int, float], str, float]],
                  lb: Sequence[float] | None = None, ub: Sequence[float] | None = None):
        """Build from a sparse row list ``[(coeffs, sense, rhs), ...]``."""
        c = np.zeros(num_vars)
        for j, v in objective.items():
            c[j] = v
        ri, ci, vals, sense, rhs = [], [], [], [], []
        for r, (coeffs, s, b) in enumerate(rows):
            for j, v in coeffs.items():
                if not 0 <= j < num_vars:
                    raise LPError(f"row {r}: variable index {j} out of range")
                ri.append(r)
                ci.append(j)
                vals.append(v)
            sense.append(s)
            rhs.append(b)
        A = sp.csr_matrix((vals, (ri, ci)), shape=(len(rhs), num_vars))
        lb = np.zeros(num_vars) if lb is None else np.asarray(lb, float)
        ub = np.full(num_vars, np.inf) if ub is None else np.asarray(ub, float)
        lp = cls(c, A, np.array(sense, dtype=object), np.array(rhs, float), lb, ub)
        lp.validate()
        return lp


@dataclass
class LPOutcome:
    status: Status
    primal: np.ndarray | None = None
    objective: float | None = None
    duals: np.ndarray | None = None  # one per row; sign: <= rows nonpositive, >= rows nonnegative
    reduced_costs: np.ndarray | None = None  # c - A'y, one per column
    farkas: np.ndarray | None = None  # one per row (Infeasible only)
    farkas_margin: float | None = None
    iterations: int = 0
    backend: str = ""
    info: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == Status.OPTIMAL


def bound_term(reduced_costs: np.ndarray, lb: np.ndarray, ub: np.ndarray) -> float:
    """Contribution of column-bound duals to the dual objective.

    A positive reduced cost prices the lower bound, a negative one the upper.
    An infinite bound with a nonzero price contributes nothing finite; such
    entries are reported by :func:`strong_duality_gap` through the
    dual-feasibility residual instead.
    """
    d = np.asarray(reduced_costs, float)
    pos = d > 0
    neg = d < 0
    total = 0.0
    lo = lb[pos]
    hi = ub[neg]
    total += float(np.dot(d[pos][np.isfinite(lo)], lo[np.isfinite(lo)]))
    total += float(np.dot(d[neg][np.isfinite(hi)], hi[np.isfinite(hi)]))
    return total


def dual_objective(duals: np.ndarray, rhs: np.ndarray,
                   bound_duals: np.ndarray | None = None,
                   lb: np.ndarray | None = None, ub: np.ndarray | None = None) -> float:
    """``y'rhs`` plus the bound-dual contribution."""
    duals = np.asarray(duals, float)
    rhs = np.asarray(rhs, float)
    if duals.shape != rhs.shape:
        raise LPError(f"length mismatch: {duals.shape} duals vs {rhs.shape} rhs")
    val = float(np.dot(duals, rhs))
    if bound_duals is not None:
        if lb is None or ub is None:
            raise LPError("bound duals need lb and ub")
        bound_duals = np.asarray(bound_duals, float)
        if not (bound_duals.shape == np.shape(lb) == np.shape(ub)):
            raise LPError("length mismatch between bound duals and bounds")
        val += bound_term(bound_duals, np.asarray(lb, float), np.asarray(ub, float))
    return val


def row_activity(lp: LinearProgram, x: np.ndarray) -> np.ndarray:
    return lp.A @ x


def primal_residual(lp: LinearProgram, x: np.ndarray) -> float:
    """Max scaled violation of rows and bounds at ``x``."""
    ax = lp.A @ x
    scale = 1.0 + np.abs(lp.rhs)
    viol = np.zeros_like(ax)
    le = lp.sense == LE
    ge = lp.sense == GE
    eq = lp.sense == EQ
    viol[le] = np.maximum(ax[le] - lp.rhs[le], 0)
    viol[ge] = np.maximum(lp.rhs[ge] - ax[ge], 0)
    viol[eq] = np.abs(ax[eq] - lp.rhs[eq])
    worst = float(np.max(viol / scale)) if viol.size else 0.0
    bviol = np.maximum(lp.lb - x, 0) + np.maximum(x - lp.ub, 0)
    if bviol.size:
        worst = max(worst, float(np.max(bviol / (1.0 + np.abs(x)))))
    return worst


def dual_sign_residual(lp: LinearProgram, y: np.ndarray) -> float:
    le = lp.sense == LE
    ge = lp.sense == GE
    r = 0.0
    if np.any(le):
        r = max(r, float(np.max(np.maximum(y[le], 0))))
    if np.any(ge):
        r = max(r, float(np.max(np.maximum(-y[ge], 0))))
    return r


def complementary_slackness(lp: LinearProgram, x: np.ndarray, y: np.ndarray,
                            d: np.ndarray | None = None) -> float:
    """Max of ``|y_i * slack_i|`` and ``|d_j * gap_to_priced_bound_j|`` (scaled)."""
    slack = lp.A @ x - lp.rhs
    r = float(np.max(np.abs(y * slack) / (1.0 + np.abs(lp.rhs)))) if slack.size else 0.0
    if d is not None and d.size:
        gap = np.where(d > 0, x - lp.lb, np.where(d < 0, lp.ub - x, 0.0))
        gap = np.where(np.isfinite(gap), gap, 0.0)
        r = max(r, float(np.max(np.abs(d * gap) / (1.0 + np.abs(x)))))
    return r


def strong_duality_gap(lp: LinearProgram, out: LPOutcome) -> float:
    """Relative primal/dual objective gap ``|p - d| / (1 + |p|)``."""
    dobj = dual_objective(out.duals, lp.rhs, out.reduced_costs, lp.lb, lp.ub)
    return abs(out.objective - dobj) / (1.0 + abs(out.objective))


def box_max(g: np.ndarray, lb: np.ndarray, ub: np.ndarray) -> float:
    """``max g'x`` over ``lb <= x <= ub`` (may be ``inf``)."""
    hi = np.where(g > 0, ub, np.where(g < 0, lb, 0.0))
    with np.errstate(invalid="ignore"):
        terms = np.where(g != 0, g * hi, 0.0)
    return float(np.sum(terms))


def farkas_margin(lp: LinearProgram, ray: np.ndarray, tol: float = EPS_FEAS) -> float:
    """Contradiction margin of a candidate infeasibility certificate.

    With the sign convention ``ray_i <= 0`` on ``<=`` rows and ``>= 0`` on ``>=``
    rows every feasible ``x`` satisfies ``(A'ray)'x >= ray'rhs``.  The margin is
    ``ray'rhs - max_box (A'ray)'x``; a strictly positive value certifies
    infeasibility.  Sign violations beyond ``tol`` yield ``-inf``.
    """
    ray = np.asarray(ray, float)
    if ray.shape != (lp.num_rows,):
        raise LPError("Farkas ray length does not match the row count")
    scale = max(1.0, float(np.max(np.abs(ray)))) if ray.size else 1.0
    if dual_sign_residual(lp, ray) > tol * scale:
        return -np.inf
    r = ray.copy()
    r[(lp.sense == LE) & (r > 0)] = 0.0
    r[(lp.sense == GE) & (r < 0)] = 0.0
    g = lp.A.T @ r
    g[np.abs(g) <= tol * scale] = 0.0
    return float(np.dot(r, lp.rhs)) - box_max(g, lp.lb, lp.ub)


def is_valid_farkas(lp: LinearProgram, ray: np.ndarray, tol: float = EPS_FEAS) -> bool:
    if ray is None or not np.any(ray):
        return False
    scale = max(1.0, float(np.max(np.abs(ray))))
    return farkas_margin(lp, ray, tol) > tol * scale


def dump_lp(lp: LinearProgram, path) -> None:
    """Plain-text row dump: one row per line as ``sense rhs idx:coef ...``."""
    A = lp.A.tocsr()
    with open(path, "w") as fh:
        fh.write(f"# vars {lp.num_vars} rows {lp.num_rows}\n")
        fh.write("obj " + " ".join(f"{j}:{v:.17g}" for j, v in enumerate(lp.c) if v) + "\n")
        for j in range(lp.num_vars):
            if lp.lb[j] != 0 or np.isfinite(lp.ub[j]):
                fh.write(f"bound {j} {lp.lb[j]:.17g} {lp.ub[j]:.17g}\n")
        for i in range(lp.num_rows):
            lo, hi = A.indptr[i], A.indptr[i + 1]
            terms = " ".join(f"{j}:{v:.17g}" for j, v in zip(A.indices[lo:hi], A.data[lo:hi]))
            fh.write(f"{lp.sense[i]} {lp.rhs[i]:.17g} {terms}\n")
