"""Fixed point between the subproblem's travel times and the logit mode split.

For a fixed lane design the AV share per OD is iterated with successive
averages until the shares stop moving.  :func:`sweep_shares` evaluates the
raw logit response ``F(p)`` on a grid of shares for a single-OD network.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .logit import ModeSplit, logit_share, msa_update
from .lp import HighsSession, LPOutcome, Status, solve
from .network import LaneDesign, Network
from .sodta import (WAVE_LANE_TYPE, FlowSolution, SubproblemOptions, SubproblemTemplate,
                    TimeGrid, link_travel_times, od_travel_times)


class SubproblemSolver:
    """Reusable solver for one network: the LP structure is built once and warm-started.

    With the lane-type wave-speed mode the structure depends on the design,
    so one template per design is kept.
    """

    def __init__(self, net: Network, grid: TimeGrid | None = None,
                 options: SubproblemOptions | None = None, backend: str = "highs",
                 method: str = "hybrid"):
        self.net = net
        self.method = method
        self.grid = grid or TimeGrid.from_network(net)
        self.options = options or SubproblemOptions()
        self.backend = backend
        self._templates: dict[tuple, tuple[SubproblemTemplate, HighsSession | None]] = {}
        self.solves = 0

    def template(self, b: LaneDesign) -> SubproblemTemplate:
        return self._entry(b)[0]

    def _entry(self, b: LaneDesign):
        key = b.bits(self.net.candidate_lanes) if self.options.wave_speed_mode == WAVE_LANE_TYPE else ()
        if key not in self._templates:
            tpl = SubproblemTemplate(self.net, self.grid, self.options,
                                     design=b if key else None)
            session = HighsSession(tpl.linear_program(), method=self.method) if self.backend == "highs" else None
            self._templates[key] = (tpl, session)
        return self._templates[key]

    def solve(self, b: LaneDesign, p: ModeSplit) -> tuple[SubproblemTemplate, LPOutcome, np.ndarray]:
        tpl, session = self._entry(b)
        rhs = tpl.rhs(b, p)
        self.solves += 1
        if session is not None:
            return tpl, session.solve(rhs), rhs
        return tpl, solve(tpl.linear_program(rhs), backend=self.backend), rhs


@dataclass
class FixedPointStep:
    iteration: int
    msa_index: int
    shares: dict  # p^n, the input of this iteration's solve
    logit: dict  # logit response before averaging
    averaged: dict  # p^{n+1}
    residual: float
    tstt: float


@dataclass
class FixedPointResult:
    shares: ModeSplit | None
    link_tt: dict | None
    od_tt: dict | None
    tstt: float | None
    flows: FlowSolution | None
    iterations: int
    converged: bool
    residual: float
    infeasible: bool = False
    farkas: np.ndarray | None = None
    infeasible_rhs: np.ndarray | None = None
    infeasible_shares: ModeSplit | None = None
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    rhs: np.ndarray | None = None
    msa_index: int = 1  # next MSA counter value
    trace: list[FixedPointStep] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    timed_out: bool = False

    def write_trace_csv(self, path) -> None:
        ods = list(self.trace[0].shares) if self.trace else []
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            head = ["iteration", "msa_index"]
            for od in ods:
                lab = f"{od[0]}->{od[1]}"
                head += [f"p_{lab}", f"p_logit_{lab}", f"p_next_{lab}"]
            w.writerow(head + ["residual", "tstt_veh_s"])
            for s in self.trace:
                row = [s.iteration, s.msa_index]
                for od in ods:
                    row += [f"{s.shares[od]:.6f}", f"{s.logit[od]:.6f}", f"{s.averaged[od]:.6f}"]
                w.writerow(row + [f"{s.residual:.6g}", f"{s.tstt:.3f}"])


def logit_response(net: Network, od_tt: dict, flags: list | None = None,
                   beta_av: float | None = None) -> dict:
    """Logit AV share per OD for the given OD travel times."""
    out = {}
    for od in net.od_pairs:
        tau_lv, tau_av = od_tt[od.key]
        out[od.key] = logit_share(tau_lv, tau_av, od.beta_lv,
                                  od.beta_av if beta_av is None else beta_av, flags)
    return out


def run_fixed_point(net: Network, b: LaneDesign, p0: ModeSplit, epsilon_msa: float = 1e-3,
                    max_iter: int = 500, *, grid: TimeGrid | None = None,
                    options: SubproblemOptions | None = None,
                    solver: SubproblemSolver | None = None, msa_start: int = 1,
                    deadline: float | None = None) -> FixedPointResult:
    """Alternate subproblem solves and averaged logit updates for design ``b``.

    ``msa_start`` is the first MSA counter value; callers keeping one global
    counter pass the ``msa_index`` of the previous result.  ``deadline`` is a
    ``time.monotonic()`` value after which the loop stops unconverged.
    """
    if not epsilon_msa > 0:
        raise ValueError("epsilon_msa must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    solver = solver or SubproblemSolver(net, grid, options)
    p = p0
    n = max(1, int(msa_start))
    trace: list[FixedPointStep] = []
    flags: list[str] = []
    last = None
    for it in range(1, max_iter + 1):
        tpl, out, rhs = solver.solve(b, p)
        if out.status == Status.INFEASIBLE:
            return FixedPointResult(None, None, None, None, None, it, False, math.inf,
                                    infeasible=True, farkas=out.farkas, infeasible_rhs=rhs,
                                    infeasible_shares=p, msa_index=n, trace=trace, flags=flags)
        if out.status != Status.OPTIMAL:
            raise RuntimeError(f"subproblem returned {out.status.value}")
        sol = FlowSolution.from_outcome(tpl, out, rhs)
        ltt = link_travel_times(sol, net, solver.grid)
        odtt = {od.key: od_travel_times(ltt, od) for od in net.od_pairs}
        resp = logit_response(net, odtt, flags)
        nxt = {od: msa_update(p[od], resp[od], n) for od in p.shares}
        residual = sum(abs(nxt[od] - p[od]) for od in p.shares)
        trace.append(FixedPointStep(it, n, dict(p.shares), resp, nxt, residual, sol.objective))
        last = (p, ltt, odtt, sol, out, rhs, residual)
        if residual <= epsilon_msa:
            return _solved_result(last, it, True, n + 1, trace, flags)
        p = ModeSplit(nxt)
        n += 1
        if deadline is not None and time.monotonic() > deadline:
            break
    timed_out = deadline is not None and time.monotonic() > deadline
    return _solved_result(last, len(trace), False, n, trace, flags, timed_out)


def _solved_result(last, iterations, converged, msa_index, trace, flags, timed_out=False):
    p, ltt, odtt, sol, out, rhs, residual = last
    return FixedPointResult(p, ltt, odtt, sol.objective, sol, iterations, converged, residual,
                            duals=out.duals, reduced_costs=out.reduced_costs, rhs=rhs,
                            msa_index=msa_index, trace=trace, flags=flags, timed_out=timed_out)


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

@dataclass
class SweepReport:
    p_grid: list[float]
    beta_av: list[float]
    response: dict[float, list[float]]  # beta_av -> F(p) per grid point
    tstt: list[float]
    tau: list[tuple[float, float]]
    crossings: dict[float, list[tuple[float, float]]]  # beta_av -> [(p_lo, p_hi)]

    def crossing_tstt(self, beta: float) -> list[float]:
        """TSTT at the grid point nearest each crossing of ``F(p) = p``."""
        out = []
        F = self.response[beta]
        for lo, hi in self.crossings[beta]:
            i, j = self.p_grid.index(lo), self.p_grid.index(hi)
            k = i if abs(F[i] - lo) <= abs(F[j] - hi) else j
            out.append(self.tstt[k])
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["beta_av_per_s", "p", "p_logit", "tstt_veh_s", "tau_lv_s", "tau_av_s"])
            for beta in self.beta_av:
                for k, p in enumerate(self.p_grid):
                    w.writerow([beta, f"{p:.4f}", f"{self.response[beta][k]:.6f}",
                                f"{self.tstt[k]:.3f}", f"{self.tau[k][0]:.3f}", f"{self.tau[k][1]:.3f}"])


def find_crossings(p_grid: Sequence[float], response: Sequence[float]) -> list[tuple[float, float]]:
    """Grid intervals on which ``F(p) - p`` changes sign (an exact zero counts once)."""
    g = [f - p for p, f in zip(p_grid, response)]
    out = []
    k = 0
    while k < len(g) - 1:
        if g[k] == 0.0:
            out.append((p_grid[k], p_grid[k]))
        elif g[k + 1] != 0.0 and (g[k] > 0) != (g[k + 1] > 0):
            out.append((p_grid[k], p_grid[k + 1]))
        k += 1
    if g and g[-1] == 0.0:
        out.append((p_grid[-1], p_grid[-1]))
    return out


def default_p_grid() -> list[float]:
    return [round(0.5 + 0.01 * k, 2) for k in range(50)]


def sweep_shares(net: Network, b: LaneDesign, p_grid: Sequence[float] | None = None,
                 beta_av_list: Sequence[float] = (0.0018,), *, grid: TimeGrid | None = None,
                 options: SubproblemOptions | None = None,
                 solver: SubproblemSolver | None = None) -> SweepReport:
    """Raw logit response and TSTT over a grid of AV shares (single-OD networks only).

    The subproblem does not depend on ``beta_av``, so each grid point is
    solved once and reused for every entry of ``beta_av_list``.
    """
    if len(net.od_pairs) != 1:
        raise ValueError("the share sweep is defined for single-OD networks only")
    p_grid = list(default_p_grid() if p_grid is None else p_grid)
    if any(not 0.0 <= p <= 1.0 for p in p_grid):
        raise ValueError("sweep grid must lie in [0, 1]")
    if any(b2 <= a for a, b2 in zip(p_grid, p_grid[1:])):
        raise ValueError("sweep grid must be strictly increasing")
    solver = solver or SubproblemSolver(net, grid, options)
    od = net.od_pairs[0]
    tstts, taus = [], []
    for p in p_grid:
        tpl, out, rhs = solver.solve(b, ModeSplit({od.key: p}))
        if out.status != Status.OPTIMAL:
            raise RuntimeError(f"subproblem at p={p} returned {out.status.value}")
        sol = FlowSolution.from_outcome(tpl, out, rhs)
        ltt = link_travel_times(sol, net, solver.grid)
        taus.append(od_travel_times(ltt, od))
        tstts.append(sol.objective)
    response = {}
    crossings = {}
    for beta in beta_av_list:
        F = [logit_share(tl, ta, od.beta_lv, beta) for tl, ta in taus]
        response[beta] = F
        crossings[beta] = find_crossings(p_grid, F)
    return SweepReport(p_grid, list(beta_av_list), response, tstts, taus, crossings)
