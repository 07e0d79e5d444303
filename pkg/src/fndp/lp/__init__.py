"""Linear-programming kernel: in-house revised simplex plus a HiGHS backend."""
from .highs import HighsSession, solve_highs
from .model import (EPS_CS, EPS_FEAS, EPS_GAP, EQ, GE, LE, LinearProgram, LPError,
                    LPOutcome, Status, bound_term, box_max, complementary_slackness, dual_objective,
                    dump_lp, farkas_margin, is_valid_farkas, primal_residual,
                    strong_duality_gap)
from .simplex import RevisedSimplex, solve_simplex

BACKENDS = ("highs", "simplex")


def solve(lp: LinearProgram, backend: str = "highs", **kw) -> LPOutcome:
    """Solve ``lp``; the outcome carries row duals or a Farkas ray.

    ``backend="simplex"`` runs the in-house revised simplex (exact pivoting,
    suitable for small and medium problems); ``"highs"`` is used for the large
    subproblems.
    """
    lp.validate()
    if backend == "simplex":
        return solve_simplex(lp, **kw)
    if backend == "highs":
        return solve_highs(lp, **kw)
    raise LPError(f"unknown LP backend {backend!r}")


__all__ = [
    "BACKENDS", "EPS_CS", "EPS_FEAS", "EPS_GAP", "EQ", "GE", "LE", "HighsSession",
    "LinearProgram", "LPError", "LPOutcome", "RevisedSimplex", "Status", "bound_term", "box_max",
    "complementary_slackness", "dual_objective", "dump_lp", "farkas_margin",
    "is_valid_farkas", "primal_residual", "solve", "solve_highs", "solve_simplex",
    "strong_duality_gap",
]
