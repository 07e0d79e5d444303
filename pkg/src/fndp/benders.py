"""Benders decomposition over binary lane designs with the mode-split fixed point inside.

The master problem picks a design by exhaustive enumeration against the
accumulated cuts.  Each outer iteration evaluates the proposed design with
:func:`~fndp.fixed_point.run_fixed_point`, then adds an optimality cut built
from the subproblem duals or, if the subproblem is infeasible, a feasibility
cut built from its Farkas ray.  Cuts are affine in the design because only the
subproblem's right-hand side depends on it.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fixed_point import FixedPointResult, SubproblemSolver, run_fixed_point
from .logit import ModeSplit, initial_shares
from .lp import EPS_FEAS, EPS_GAP, LPError, bound_term, box_max
from .network import LaneDesign, Network
from .sodta import WAVE_LANE_TYPE, ParamLP, SubproblemOptions, TimeGrid

OPTIMALITY = "optimality"
FEASIBILITY = "feasibility"
MAX_ENUMERATION_LANES = 24


@dataclass(frozen=True)
class Cut:
    """``Z >= constant + coeffs.b`` (optimality) or ``0 >= constant + coeffs.b`` (feasibility)."""

    kind: str
    constant: float
    coeffs: tuple[float, ...]
    lanes: tuple[str, ...]
    design: tuple[int, ...] = ()
    shares: tuple[tuple[tuple[str, str], float], ...] = ()
    iteration: int = 0

    def value(self, bits: Sequence[int]) -> float:
        return self.constant + float(np.dot(self.coeffs, bits)) if self.coeffs else self.constant

    def excludes(self, bits: Sequence[int], tol: float = EPS_FEAS) -> bool:
        """Whether a feasibility cut rules out ``bits``."""
        return self.kind == FEASIBILITY and self.value(bits) > tol * max(1.0, abs(self.constant))

    def to_json(self) -> dict:
        return {"kind": self.kind, "constant": self.constant,
                "coeffs": dict(zip(self.lanes, self.coeffs)),
                "design": list(self.design), "iteration": self.iteration,
                "shares": {f"{o}->{d}": p for (o, d), p in self.shares}}


def _provenance(paramlp: ParamLP, p: ModeSplit, iteration: int):
    design = paramlp.design.bits(paramlp.candidate_lanes) if paramlp.design is not None else ()
    return design, tuple(sorted(p.shares.items())), iteration


def optimality_cut(duals: np.ndarray, paramlp: ParamLP, p: ModeSplit,
                   reduced_costs: np.ndarray | None = None, iteration: int = 0) -> Cut:
    """Cut from optimal row duals of the subproblem at split ``p``.

    ``constant = duals.rhs0 (+ bound terms)`` and ``coeffs = duals . sensitivity``;
    by weak duality the cut underestimates the subproblem optimum at every
    design for this ``p`` and is tight where the duals came from.
    """
    if duals is None:
        raise ValueError("optimality cut needs duals from an optimal solve")
    duals = np.asarray(duals, float)
    if duals.shape != paramlp.rhs0.shape:
        raise ValueError("dual vector length does not match the subproblem rows")
    lp = paramlp.lp
    const = float(np.dot(duals, paramlp.rhs0))
    if reduced_costs is not None:
        const += bound_term(reduced_costs, lp.lb, lp.ub)
    coeffs = paramlp.sensitivity().T @ duals
    design, shares, it = _provenance(paramlp, p, iteration)
    return Cut(OPTIMALITY, const, tuple(float(c) for c in coeffs), paramlp.candidate_lanes,
               design, shares, it)


def feasibility_cut(farkas: np.ndarray, paramlp: ParamLP, p: ModeSplit, iteration: int = 0,
                    tol: float = EPS_FEAS) -> Cut:
    """Cut ``0 >= ray.rhs(b) - max_box(A'ray)`` from an infeasibility certificate."""
    if farkas is None or not np.any(farkas):
        raise ValueError("feasibility cut needs a nonzero Farkas ray")
    ray = np.asarray(farkas, float).copy()
    lp = paramlp.lp
    if ray.shape != (lp.num_rows,):
        raise ValueError("Farkas ray length does not match the subproblem rows")
    scale = max(1.0, float(np.max(np.abs(ray))))
    wrong = ((lp.sense == "<=") & (ray > tol * scale)) | ((lp.sense == ">=") & (ray < -tol * scale))
    if np.any(wrong):
        raise ValueError("Farkas ray has entries of the wrong sign")
    ray[(lp.sense == "<=") & (ray > 0)] = 0.0
    ray[(lp.sense == ">=") & (ray < 0)] = 0.0
    g = lp.A.T @ ray
    g[np.abs(g) <= tol * scale] = 0.0
    const = float(np.dot(ray, paramlp.rhs0)) - box_max(g, lp.lb, lp.ub)
    if not math.isfinite(const):
        raise ValueError("Farkas ray gives an unbounded aggregated row")
    coeffs = paramlp.sensitivity().T @ ray
    design, shares, it = _provenance(paramlp, p, iteration)
    cut = Cut(FEASIBILITY, const, tuple(float(c) for c in coeffs), paramlp.candidate_lanes,
              design, shares, it)
    if design and not cut.excludes(design, tol):
        raise ValueError("Farkas ray does not certify infeasibility at its own design")
    return cut


class MasterExhausted(RuntimeError):
    """Every design is excluded by a feasibility cut."""


def all_designs(num_lanes: int):
    """Every 0/1 vector of length ``num_lanes`` in lexicographic order."""
    return itertools.product((0, 1), repeat=num_lanes)


def solve_master(cuts: Sequence[Cut], candidate_lanes: Sequence[str]) -> tuple[LaneDesign, float]:
    """Minimise ``Z`` over all designs subject to the cuts and ``Z >= 0``.

    Ties go to the lexicographically smallest design.
    """
    lanes = tuple(candidate_lanes)
    if len(lanes) > MAX_ENUMERATION_LANES:
        raise ValueError(f"master enumeration supports at most {MAX_ENUMERATION_LANES} candidate lanes")
    for cut in cuts:
        if cut.lanes != lanes:
            raise ValueError("cut lanes do not match the candidate lanes")
    n = len(lanes)
    designs = np.array(list(all_designs(n)), dtype=float).reshape(2 ** n, n)
    excluded = np.zeros(len(designs), dtype=bool)
    z = np.zeros(len(designs))
    for cut in cuts:
        vals = cut.constant + (designs @ np.asarray(cut.coeffs, float) if n else 0.0)
        if cut.kind == FEASIBILITY:
            excluded |= vals > EPS_FEAS * max(1.0, abs(cut.constant))
        else:
            z = np.maximum(z, vals)
    if excluded.all():
        raise MasterExhausted("all lane designs are excluded by feasibility cuts")
    z_masked = np.where(excluded, np.inf, z)
    best = float(z_masked.min())
    # lexicographic order of ``designs`` makes argmin the tie-break
    idx = int(np.flatnonzero(z_masked <= best)[0])
    bits = tuple(int(v) for v in designs[idx])
    return LaneDesign.from_bits(lanes, bits), best


# ---------------------------------------------------------------------------
# Algorithm driver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BendersConfig:
    epsilon_msa: float = 1e-3
    gap: float = 1e-4
    max_benders: int = 200
    max_fp: int = 500
    time_limit: float | None = None
    msa_reset: str = "per-benders"
    carry_shares: bool = True  # start each inner loop from the last converged split
    options: SubproblemOptions = SubproblemOptions()


@dataclass
class IterationLog:
    m: int
    design: tuple[int, ...]
    inner_iterations: int
    feasible: bool
    converged: bool
    tstt: float | None
    z_prev: float
    ub: float
    gap: float | None
    cut: str | None
    z_next: float | None


@dataclass
class DesignResult:
    design: LaneDesign
    shares: ModeSplit | None
    link_tt: dict | None
    od_tt: dict | None
    tstt: float
    lower_bound: float
    gap: float
    benders_iterations: int
    fp_iterations: int
    wall_time: float
    converged: bool
    status: str  # "optimal", "limit", "exhausted"
    baseline_tstt: float | None = None
    cuts: list[Cut] = field(default_factory=list)
    log: list[IterationLog] = field(default_factory=list)
    candidate_lanes: tuple[str, ...] = ()

    @property
    def converted(self) -> int:
        return self.design.count() if self.design is not None else 0

    @property
    def reduction_pct(self) -> float | None:
        if self.baseline_tstt is None or not self.baseline_tstt:
            return None
        return 100.0 * (self.baseline_tstt - self.tstt) / self.baseline_tstt

    def to_json(self) -> dict:
        def od(k):
            return f"{k[0]}->{k[1]}"
        return {
            "status": self.status,
            "converged": self.converged,
            "design": dict(self.design.assignment) if self.design is not None else None,
            "converted_lanes": self.converted,
            "candidate_lanes": len(self.candidate_lanes),
            "tstt_veh_s": self.tstt,
            "baseline_tstt_veh_s": self.baseline_tstt,
            "reduction_pct": self.reduction_pct,
            "lower_bound_veh_s": self.lower_bound,
            "gap": self.gap,
            "benders_iterations": self.benders_iterations,
            "fp_iterations": self.fp_iterations,
            "wall_time_s": self.wall_time,
            "shares": {od(k): v for k, v in self.shares.shares.items()} if self.shares else None,
            "od_travel_times_s": {od(k): {"lv": a, "av": b} for k, (a, b) in self.od_tt.items()} if self.od_tt else None,
            "link_travel_times_s": {k: {"lv": a, "av": b} for k, (a, b) in self.link_tt.items()} if self.link_tt else None,
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")

    def write_log_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["m", "design", "inner_iterations", "feasible", "converged", "tstt_veh_s",
                        "z_prev_veh_s", "ub_veh_s", "gap", "cut", "z_next_veh_s"])
            for r in self.log:
                w.writerow([r.m, "".join(map(str, r.design)), r.inner_iterations, int(r.feasible),
                            int(r.converged), "" if r.tstt is None else f"{r.tstt:.3f}",
                            f"{r.z_prev:.3f}", f"{r.ub:.3f}", "" if r.gap is None else f"{r.gap:.6g}",
                            r.cut or "", "" if r.z_next is None else f"{r.z_next:.3f}"])


def _paramlp(solver: SubproblemSolver, b: LaneDesign, p: ModeSplit) -> ParamLP:
    return solver.template(b).paramlp(b, p)


def baseline_tstt(net: Network, config: BendersConfig | None = None,
                  solver: SubproblemSolver | None = None) -> FixedPointResult:
    """Fixed point at the design with no AV-exclusive lanes, from free-flow shares."""
    config = config or BendersConfig()
    solver = solver or SubproblemSolver(net, options=config.options)
    return run_fixed_point(net, LaneDesign.zeros(net.candidate_lanes), initial_shares(net),
                           config.epsilon_msa, config.max_fp, solver=solver)


def optimize(net: Network, config: BendersConfig | None = None, *,
             solver: SubproblemSolver | None = None, with_baseline: bool = True,
             progress=None) -> DesignResult:
    """Run the Benders / fixed-point scheme and return the incumbent design."""
    config = config or BendersConfig()
    if config.options.wave_speed_mode == WAVE_LANE_TYPE:
        raise ValueError("the lane-type wave-speed mode makes the subproblem rows depend on "
                         "the design, so Benders cuts are not valid; use it with simulate or enumerate")
    lanes = net.candidate_lanes
    if len(lanes) > MAX_ENUMERATION_LANES:
        raise ValueError(f"at most {MAX_ENUMERATION_LANES} candidate lanes are supported")
    t_start = time.monotonic()
    deadline = None if config.time_limit is None else t_start + config.time_limit
    solver = solver or SubproblemSolver(net, options=config.options)

    p = initial_shares(net)
    b = LaneDesign.zeros(lanes)
    z_prev = 0.0
    ub = math.inf
    best: tuple | None = None  # (design, FixedPointResult)
    cuts: list[Cut] = []
    log: list[IterationLog] = []
    msa_index = 1
    fp_total = 0
    gap = math.inf
    status = "limit"
    m = 0
    while m < config.max_benders:
        m += 1
        start = msa_index if config.msa_reset == "global" else 1
        p_in = p if config.carry_shares else initial_shares(net)
        fp = run_fixed_point(net, b, p_in, config.epsilon_msa, config.max_fp, solver=solver,
                             msa_start=start, deadline=deadline)
        fp_total += fp.iterations
        msa_index = fp.msa_index
        bits = b.bits(lanes)
        cut_kind = None
        this_gap = None
        if fp.infeasible:
            plp = _paramlp(solver, b, fp.infeasible_shares)
            cuts.append(feasibility_cut(fp.farkas, plp, fp.infeasible_shares, m))
            cut_kind = FEASIBILITY
        else:
            p = fp.shares
            if fp.tstt < ub:
                ub = fp.tstt
                best = (b, fp)
            gap = (ub - z_prev) / ub if ub > 0 else 0.0
            this_gap = gap
            if gap > config.gap:
                plp = _paramlp(solver, b, fp.shares)
                cuts.append(optimality_cut(fp.duals, plp, fp.shares, fp.reduced_costs, iteration=m))
                cut_kind = OPTIMALITY
        entry = IterationLog(m, bits, fp.iterations, not fp.infeasible, fp.converged,
                             fp.tstt, z_prev, ub, this_gap, cut_kind, None)
        log.append(entry)
        if this_gap is not None and this_gap <= config.gap:
            status = "optimal"
            if progress:
                progress(entry)
            break
        try:
            b, z_prev = solve_master(cuts, lanes)
        except MasterExhausted:
            status = "exhausted"
            if progress:
                progress(entry)
            break
        entry.z_next = z_prev
        if progress:
            progress(entry)
        if deadline is not None and time.monotonic() > deadline:
            break
    if best is None:
        result = DesignResult(None, None, None, None, math.inf, z_prev, math.inf, m, fp_total,
                              time.monotonic() - t_start, False,
                              "exhausted" if status == "exhausted" else "limit",
                              cuts=cuts, log=log, candidate_lanes=lanes)
    else:
        b_star, fp_star = best
        result = DesignResult(b_star, fp_star.shares, fp_star.link_tt, fp_star.od_tt, ub, z_prev,
                              max(0.0, (ub - z_prev) / ub) if ub > 0 else 0.0, m, fp_total,
                              time.monotonic() - t_start, status == "optimal", status,
                              cuts=cuts, log=log, candidate_lanes=lanes)
    if with_baseline:
        base = baseline_tstt(net, config, solver)
        result.baseline_tstt = None if base.infeasible else base.tstt
    result.wall_time = time.monotonic() - t_start
    return result


def audit_cuts(net: Network, result: DesignResult, config: BendersConfig | None = None,
               solver: SubproblemSolver | None = None, tol: float = EPS_GAP) -> list[dict]:
    """Re-solve each cut's provenance subproblem and report tightness / exclusion."""
    config = config or BendersConfig()
    solver = solver or SubproblemSolver(net, options=config.options)
    out = []
    for cut in result.cuts:
        b = LaneDesign.from_bits(cut.lanes, cut.design)
        p = ModeSplit(dict(cut.shares))
        tpl, sol, _ = solver.solve(b, p)
        rec = {"iteration": cut.iteration, "kind": cut.kind, "design": cut.design,
               "cut_value": cut.value(cut.design)}
        if cut.kind == OPTIMALITY:
            rec["sp_objective"] = sol.objective
            rec["ok"] = abs(rec["cut_value"] - sol.objective) <= tol * (1 + abs(sol.objective))
        else:
            rec["ok"] = cut.excludes(cut.design)
        out.append(rec)
    return out
