"""Exhaustive evaluation of every lane design, used to audit the Benders incumbent."""
from __future__ import annotations

import csv
import math
import multiprocessing as mp
import time
from dataclasses import dataclass, field
from enum import Enum

from .benders import BendersConfig, DesignResult, all_designs
from .fixed_point import SubproblemSolver, run_fixed_point
from .logit import ModeSplit, initial_shares
from .network import LaneDesign, Network

MAX_ORACLE_LANES = 16
DEFAULT_TOL = 0.005


@dataclass
class DesignRecord:
    bits: tuple[int, ...]
    shares: dict | None
    tstt: float | None
    iterations: int
    feasible: bool
    converged: bool


@dataclass
class EnumerationReport:
    lanes: tuple[str, ...]
    records: list[DesignRecord]
    wall_time: float = 0.0
    scenario: str = ""

    @property
    def feasible_records(self) -> list[DesignRecord]:
        return [r for r in self.records if r.feasible]

    @property
    def best(self) -> DesignRecord | None:
        feas = self.feasible_records
        if not feas:
            return None
        # ties go to the lexicographically smallest design
        return min(feas, key=lambda r: (r.tstt, r.bits))

    def ranking(self) -> list[DesignRecord]:
        return sorted(self.feasible_records, key=lambda r: (r.tstt, r.bits))

    def record(self, bits) -> DesignRecord:
        bits = tuple(bits)
        for r in self.records:
            if r.bits == bits:
                return r
        raise KeyError(bits)

    def write_csv(self, path) -> None:
        ods = []
        for r in self.records:
            if r.shares:
                ods = list(r.shares)
                break
        rank = {r.bits: k + 1 for k, r in enumerate(self.ranking())}
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["rank", "design", "converted_lanes", "feasible", "converged",
                        "fp_iterations", "tstt_veh_s"] + [f"p_{o}->{d}" for o, d in ods])
            for r in sorted(self.records, key=lambda r: (rank.get(r.bits, math.inf), r.bits)):
                w.writerow([rank.get(r.bits, ""), "".join(map(str, r.bits)), sum(r.bits),
                            int(r.feasible), int(r.converged), r.iterations,
                            "" if r.tstt is None else f"{r.tstt:.3f}"]
                           + ([f"{r.shares[od]:.6f}" for od in ods] if r.shares else [""] * len(ods)))


# worker-process state
_W: dict = {}


def _init_worker(net: Network, config: BendersConfig):
    _W["net"] = net
    _W["config"] = config
    _W["solver"] = SubproblemSolver(net, options=config.options)
    _W["p0"] = initial_shares(net)


def _evaluate(bits: tuple[int, ...]) -> DesignRecord:
    net, config = _W["net"], _W["config"]
    b = LaneDesign.from_bits(net.candidate_lanes, bits)
    fp = run_fixed_point(net, b, _W["p0"], config.epsilon_msa, config.max_fp, solver=_W["solver"])
    if fp.infeasible:
        return DesignRecord(bits, None, None, fp.iterations, False, False)
    return DesignRecord(bits, dict(fp.shares.shares), fp.tstt, fp.iterations, True, fp.converged)


def enumerate_designs(net: Network, config: BendersConfig | None = None, workers: int = 1,
                      progress=None) -> EnumerationReport:
    """Fixed point from free-flow shares at every design; ``workers > 1`` uses a process pool."""
    config = config or BendersConfig()
    lanes = net.candidate_lanes
    if len(lanes) > MAX_ORACLE_LANES:
        raise ValueError(f"enumeration is limited to {MAX_ORACLE_LANES} candidate lanes "
                         f"(network has {len(lanes)})")
    designs = list(all_designs(len(lanes)))
    t0 = time.monotonic()
    if workers <= 1:
        _init_worker(net, config)
        records = []
        for k, bits in enumerate(designs):
            records.append(_evaluate(bits))
            if progress:
                progress(k + 1, len(designs), records[-1])
    else:
        with mp.get_context("fork").Pool(workers, _init_worker, (net, config)) as pool:
            records = []
            for k, rec in enumerate(pool.imap(_evaluate, designs)):
                records.append(rec)
                if progress:
                    progress(k + 1, len(designs), rec)
    records.sort(key=lambda r: r.bits)
    return EnumerationReport(lanes, records, time.monotonic() - t0)


class Verdict(str, Enum):
    MATCH = "Match"
    BENDERS_SUBOPTIMAL = "BendersSuboptimal"
    ORACLE_WORSE = "OracleWorse"


@dataclass
class ComparisonVerdict:
    verdict: Verdict
    delta: float  # (benders - oracle) / oracle
    oracle_tstt: float
    benders_tstt: float
    hamming: int
    oracle_design: tuple[int, ...]
    benders_design: tuple[int, ...]
    notes: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"verdict": self.verdict.value, "delta": self.delta,
                "oracle_tstt_veh_s": self.oracle_tstt, "benders_tstt_veh_s": self.benders_tstt,
                "hamming": self.hamming, "oracle_design": "".join(map(str, self.oracle_design)),
                "benders_design": "".join(map(str, self.benders_design)), "notes": self.notes}


def compare(report: EnumerationReport, result: DesignResult, tol: float = DEFAULT_TOL) -> ComparisonVerdict:
    """Classify the Benders incumbent against the enumeration optimum.

    ``delta`` is the relative TSTT excess of the incumbent over the oracle
    best; beyond ``tol`` either way the verdict is BendersSuboptimal (oracle
    better) or OracleWorse (incumbent better, which should not happen).
    """
    if tuple(result.candidate_lanes) != tuple(report.lanes):
        raise ValueError("enumeration report and design result come from different scenarios")
    best = report.best
    if best is None:
        raise ValueError("enumeration found no feasible design")
    if result.design is None:
        raise ValueError("design result has no incumbent")
    bd = result.design.bits(report.lanes)
    delta = (result.tstt - best.tstt) / best.tstt if best.tstt else 0.0
    if delta > tol:
        verdict = Verdict.BENDERS_SUBOPTIMAL
    elif delta < -tol:
        verdict = Verdict.ORACLE_WORSE
    else:
        verdict = Verdict.MATCH
    notes = []
    try:
        same = report.record(bd)
        if same.feasible and abs(same.tstt - result.tstt) > tol * same.tstt:
            notes.append(f"incumbent design evaluates to {same.tstt:.1f} veh*s from free-flow shares "
                         f"vs {result.tstt:.1f} inside Benders (different fixed point)")
    except KeyError:
        pass
    ham = sum(a != b for a, b in zip(bd, best.bits))
    return ComparisonVerdict(verdict, delta, best.tstt, result.tstt, ham, best.bits, bd, notes)
