"""Command-line entry point: ``fndp <command> SCENARIO [options]``.

Every command writes its tables into ``--out`` (CSV with unit-bearing headers,
JSON summaries) and prints a short summary on stdout.

Exit codes: 0 success, 2 invalid input, 3 an iteration or time limit was hit
(partial results are still written), 4 the scenario is infeasible.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

from . import __version__
from .benders import BendersConfig, DesignResult, optimize
from .fixed_point import SubproblemSolver, default_p_grid, run_fixed_point, sweep_shares
from .logit import ModeSplit, initial_shares
from .lp import Status
from .network import LaneDesign, natural_key
from .oracle import compare, enumerate_designs
from .scenario import MSA_RESET_MODES, Scenario, ScenarioError, load
from .sodta import (WAVE_MODES, FlowSolution, check_solution, link_travel_times,
                    od_travel_times, write_curves_csv)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_LIMIT = 3
EXIT_INFEASIBLE = 4


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# argument helpers
# ---------------------------------------------------------------------------

def _od_key(label: str) -> tuple[str, str]:
    if "->" not in label:
        raise UsageError(f"OD pair {label!r} must look like ORIGIN->DESTINATION")
    o, d = label.split("->", 1)
    return o.strip(), d.strip()


def _parse_design(sc: Scenario, bits: str | None, av_lanes: str | None) -> LaneDesign:
    lanes = sc.network.candidate_lanes
    if bits is not None and av_lanes is not None:
        raise UsageError("give either --design or --av-lanes, not both")
    if bits is not None:
        if len(bits) != len(lanes) or set(bits) - {"0", "1"}:
            raise UsageError(f"--design needs {len(lanes)} binary digits, one per candidate lane "
                             f"({', '.join(lanes)})")
        return LaneDesign.from_bits(lanes, [int(ch) for ch in bits])
    if av_lanes is not None:
        chosen = {x.strip() for x in av_lanes.split(",") if x.strip()}
        unknown = chosen - set(lanes)
        if unknown:
            raise UsageError(f"--av-lanes: not candidate lanes: {', '.join(sorted(unknown))}")
        return LaneDesign({lane: int(lane in chosen) for lane in lanes})
    if sc.design is not None:
        return sc.design
    return LaneDesign.zeros(lanes)


def _parse_shares(sc: Scenario, p: float | None, shares: list[str] | None) -> ModeSplit:
    net = sc.network
    keys = [od.key for od in net.od_pairs]
    if p is not None:
        if not 0.0 <= p <= 1.0:
            raise UsageError("--p must lie in [0, 1]")
        base = {k: p for k in keys}
    elif sc.mode_split is not None:
        base = dict(sc.mode_split.shares)
    else:
        base = dict(initial_shares(net).shares)
    for item in shares or []:
        if "=" not in item:
            raise UsageError(f"--share {item!r} must look like O->D=VALUE")
        label, val = item.split("=", 1)
        key = _od_key(label)
        if key not in base:
            raise UsageError(f"--share: unknown OD pair {label}")
        try:
            v = float(val)
        except ValueError:
            raise UsageError(f"--share {item!r}: {val!r} is not a number") from None
        if not 0.0 <= v <= 1.0:
            raise UsageError(f"--share {item!r}: share must lie in [0, 1]")
        base[key] = v
    return ModeSplit(base)


def _scenario(args) -> Scenario:
    sc = load(args.scenario)
    sc = sc.with_overrides(epsilon_msa=args.epsilon_msa, gap=args.gap, max_benders=args.max_benders,
                           max_fp=args.max_fp, time_limit=args.time_limit,
                           wave_speed_mode=args.wave_speed_mode, msa_reset=args.msa_reset,
                           workers=getattr(args, "workers", None))
    sc = sc.with_knobs(demand_scale=args.demand_scale, q_av_scale=args.q_av_scale,
                       beta_av_scale=args.beta_av_scale)
    if args.loading_window is not None:
        sc = sc.with_loading_window(args.loading_window)
    if args.horizon is not None:
        sc = sc.with_horizon(args.horizon)
    return sc


def _config(sc: Scenario) -> BendersConfig:
    a = sc.algorithm
    return BendersConfig(a.epsilon_msa, a.gap, a.max_benders, a.max_fp, a.time_limit,
                         a.msa_reset, options=a.subproblem_options)


def _deadline(sc: Scenario) -> float | None:
    t = sc.algorithm.time_limit
    return None if t is None else time.monotonic() + t


# ---------------------------------------------------------------------------
# table writers
# ---------------------------------------------------------------------------

def _od(k) -> str:
    return f"{k[0]}->{k[1]}"


def write_link_times_csv(link_tt: dict, path, design: LaneDesign | None = None, net=None) -> None:
    """Per-link LV/AV travel times, one row per freeway link."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["link", "av_lanes", "lv_travel_time_s", "av_travel_time_s"])
        for lid in sorted(link_tt, key=natural_key):
            n_av = ""
            if design is not None and net is not None:
                n_av = sum(design[l] for l in net.links[lid].lane_ids if l in design.assignment)
            lv, av = link_tt[lid]
            w.writerow([lid, n_av, f"{lv:.3f}", f"{av:.3f}"])


def write_od_times_csv(od_tt: dict, shares: ModeSplit | None, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["od", "av_share", "lv_travel_time_s", "av_travel_time_s"])
        for k, (lv, av) in od_tt.items():
            w.writerow([_od(k), "" if shares is None else f"{shares[k]:.6f}", f"{lv:.3f}", f"{av:.3f}"])


def _write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_simulate(args, sc: Scenario, out: Path) -> int:
    net = sc.network
    b = _parse_design(sc, args.design, args.av_lanes)
    p = _parse_shares(sc, args.p, args.share)
    solver = SubproblemSolver(net, options=sc.algorithm.subproblem_options)
    tpl, res, rhs = solver.solve(b, p)
    if res.status == Status.INFEASIBLE:
        _write_json({"status": "infeasible", "design": dict(b.assignment),
                     "shares": {_od(k): v for k, v in p.shares.items()}}, out / "simulate.json")
        print("subproblem infeasible for this design and mode split")
        return EXIT_INFEASIBLE
    sol = FlowSolution.from_outcome(tpl, res, rhs)
    rows = write_curves_csv(sol, out / "curves.csv")
    ltt = link_travel_times(sol, net, solver.grid)
    odtt = {od.key: od_travel_times(ltt, od) for od in net.od_pairs}
    write_link_times_csv(ltt, out / "link_travel_times.csv", b, net)
    write_od_times_csv(odtt, p, out / "od_travel_times.csv")
    checks = check_solution(net, b, p, solver.grid, sol, sc.algorithm.subproblem_options)
    _write_json({"status": "optimal", "tstt_veh_s": sol.objective, "design": dict(b.assignment),
                 "shares": {_od(k): v for k, v in p.shares.items()},
                 "curve_rows": rows, "max_residuals": checks}, out / "simulate.json")
    print(f"TSTT {sol.objective:.1f} veh*s; max constraint residual {max(checks.values(), default=0.0):.2e}")
    return EXIT_OK


def cmd_fixed_point(args, sc: Scenario, out: Path) -> int:
    net = sc.network
    b = _parse_design(sc, args.design, args.av_lanes)
    p0 = _parse_shares(sc, args.p, args.share) if (args.p is not None or args.share) else initial_shares(net)
    a = sc.algorithm
    fp = run_fixed_point(net, b, p0, a.epsilon_msa, a.max_fp, options=a.subproblem_options,
                         deadline=_deadline(sc))
    fp.write_trace_csv(out / "trace.csv")
    summary = {"design": dict(b.assignment), "converged": fp.converged, "infeasible": fp.infeasible,
               "iterations": fp.iterations, "residual": fp.residual, "tstt_veh_s": fp.tstt,
               "shares": {_od(k): v for k, v in fp.shares.shares.items()} if fp.shares else None,
               "flags": sorted(set(fp.flags))}
    _write_json(summary, out / "fixed_point.json")
    if fp.infeasible:
        print(f"subproblem infeasible at iteration {fp.iterations}")
        return EXIT_INFEASIBLE
    write_link_times_csv(fp.link_tt, out / "link_travel_times.csv", b, net)
    write_od_times_csv(fp.od_tt, fp.shares, out / "od_travel_times.csv")
    shares = ", ".join(f"{_od(k)}={v:.4f}" for k, v in fp.shares.shares.items())
    state = "converged" if fp.converged else "NOT converged"
    print(f"{state} after {fp.iterations} iterations; TSTT {fp.tstt:.1f} veh*s; p* {shares}")
    return EXIT_OK if fp.converged else EXIT_LIMIT


def cmd_sweep(args, sc: Scenario, out: Path) -> int:
    net = sc.network
    b = _parse_design(sc, args.design, args.av_lanes)
    if len(net.od_pairs) != 1:
        raise UsageError("sweep needs a single-OD scenario")
    betas = args.beta_av if args.beta_av else [net.od_pairs[0].beta_av]
    grid = default_p_grid()
    if args.p_min is not None or args.p_max is not None or args.p_step is not None:
        lo = 0.5 if args.p_min is None else args.p_min
        hi = 0.99 if args.p_max is None else args.p_max
        step = 0.01 if args.p_step is None else args.p_step
        if not step > 0 or hi < lo:
            raise UsageError("sweep grid needs p_min <= p_max and a positive step")
        grid = [round(lo + k * step, 10) for k in range(int(round((hi - lo) / step)) + 1)]
    rep = sweep_shares(net, b, grid, betas, options=sc.algorithm.subproblem_options)
    rep.write_csv(out / "sweep.csv")
    summary = {str(beta): {"crossings": [list(c) for c in rep.crossings[beta]],
                           "tstt_at_crossings_veh_s": rep.crossing_tstt(beta)} for beta in betas}
    _write_json(summary, out / "sweep.json")
    for beta in betas:
        print(f"beta_av={beta}: {len(rep.crossings[beta])} crossing(s) {rep.crossings[beta]}")
    return EXIT_OK


def _print_result(res: DesignResult) -> None:
    red = res.reduction_pct
    print(f"status {res.status}; converted lanes {res.converted}/{len(res.candidate_lanes)}; "
          f"TSTT {res.tstt:.1f} veh*s"
          + (f"; reduction {red:.2f}% vs no AV lanes" if red is not None else "")
          + f"; Benders iterations {res.benders_iterations}; FP iterations {res.fp_iterations}")


def _write_result(res: DesignResult, out: Path, net) -> None:
    res.write_json(out / "design_result.json")
    res.write_log_csv(out / "benders_log.csv")
    _write_json([c.to_json() for c in res.cuts], out / "cuts.json")
    if res.link_tt:
        write_link_times_csv(res.link_tt, out / "link_travel_times.csv", res.design, net)
        write_od_times_csv(res.od_tt, res.shares, out / "od_travel_times.csv")


def _result_code(res: DesignResult) -> int:
    if res.design is None:
        return EXIT_INFEASIBLE
    return EXIT_OK if res.status == "optimal" else EXIT_LIMIT


def cmd_optimize(args, sc: Scenario, out: Path) -> int:
    net = sc.network
    res = optimize(net, _config(sc), with_baseline=not args.no_baseline,
                   progress=_progress_benders if args.verbose else None)
    _write_result(res, out, net)
    if res.design is None:
        print("no feasible lane design found")
        return EXIT_INFEASIBLE
    _print_result(res)
    return _result_code(res)


def _progress_benders(entry) -> None:
    print(f"  m={entry.m} design={''.join(map(str, entry.design))} fp={entry.inner_iterations} "
          f"tstt={entry.tstt} ub={entry.ub:.1f} gap={entry.gap}", file=sys.stderr, flush=True)


def _progress_oracle(k, total, rec) -> None:
    print(f"  {k}/{total} {''.join(map(str, rec.bits))} tstt={rec.tstt}", file=sys.stderr, flush=True)


def cmd_enumerate(args, sc: Scenario, out: Path) -> int:
    rep = enumerate_designs(sc.network, _config(sc), workers=sc.algorithm.workers,
                            progress=_progress_oracle if args.verbose else None)
    rep.write_csv(out / "enumeration.csv")
    best = rep.best
    _write_json({"designs": len(rep.records), "feasible": len(rep.feasible_records),
                 "wall_time_s": rep.wall_time,
                 "best_design": "".join(map(str, best.bits)) if best else None,
                 "best_tstt_veh_s": best.tstt if best else None,
                 "unconverged": sum(1 for r in rep.feasible_records if not r.converged)},
                out / "enumeration.json")
    if best is None:
        print("no feasible design")
        return EXIT_INFEASIBLE
    print(f"{len(rep.records)} designs in {rep.wall_time:.1f}s; best {''.join(map(str, best.bits))} "
          f"TSTT {best.tstt:.1f} veh*s")
    return EXIT_OK


def cmd_compare(args, sc: Scenario, out: Path) -> int:
    net = sc.network
    cfg = _config(sc)
    res = optimize(net, cfg, with_baseline=False)
    _write_result(res, out, net)
    if res.design is None:
        print("Benders found no feasible design")
        return EXIT_INFEASIBLE
    rep = enumerate_designs(net, cfg, workers=sc.algorithm.workers)
    rep.write_csv(out / "enumeration.csv")
    verdict = compare(rep, res, args.tol)
    _write_json(verdict.to_json(), out / "compare.json")
    print(f"{verdict.verdict.value}: delta {100 * verdict.delta:+.3f}%, Hamming distance {verdict.hamming}, "
          f"oracle {verdict.oracle_tstt:.1f} vs Benders {verdict.benders_tstt:.1f} veh*s")
    for note in verdict.notes:
        print(f"note: {note}")
    return _result_code(res)


COMMANDS = {
    "simulate": (cmd_simulate, "one subproblem solve at a given design and mode split"),
    "fixed-point": (cmd_fixed_point, "mode-split fixed point for a given design"),
    "sweep": (cmd_sweep, "logit response over a grid of AV shares (single OD)"),
    "optimize": (cmd_optimize, "Benders search for the best lane design"),
    "enumerate": (cmd_enumerate, "fixed point at every lane design"),
    "compare": (cmd_compare, "Benders incumbent against full enumeration"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("scenario", help="scenario JSON file or bundled name (single_od, multi_od, ...)")
    common.add_argument("--out", default=".", help="output directory (created if missing)")
    common.add_argument("--epsilon-msa", type=float, help="fixed-point tolerance on sum |dp|")
    common.add_argument("--gap", type=float, help="relative Benders gap")
    common.add_argument("--max-benders", type=int, help="Benders iteration limit")
    common.add_argument("--max-fp", type=int, help="fixed-point iteration limit")
    common.add_argument("--time-limit", type=float, help="wall-clock limit in seconds")
    common.add_argument("--seed", type=int, default=0, help="reserved; the algorithms are deterministic")
    common.add_argument("--wave-speed-mode", choices=WAVE_MODES)
    common.add_argument("--msa-reset", choices=MSA_RESET_MODES)
    common.add_argument("--demand-scale", type=float, help="multiply every OD demand")
    common.add_argument("--q-av-scale", type=float, help="multiply the AV-lane capacity")
    common.add_argument("--beta-av-scale", type=float, help="multiply every AV time coefficient")
    common.add_argument("--horizon", type=float, help="simulation horizon in seconds")
    common.add_argument("--loading-window", type=float,
                        help="spread each OD's demand evenly over the first this-many seconds")
    common.add_argument("-v", "--verbose", action="store_true", help="progress on stderr")

    design = argparse.ArgumentParser(add_help=False)
    design.add_argument("--design", help="one 0/1 digit per candidate lane, in scenario order")
    design.add_argument("--av-lanes", help="comma-separated candidate lanes made AV-exclusive")

    shares = argparse.ArgumentParser(add_help=False)
    shares.add_argument("--p", type=float, help="AV share applied to every OD pair")
    shares.add_argument("--share", action="append", metavar="O->D=P", help="AV share of one OD pair")

    parser = argparse.ArgumentParser(prog="fndp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    parents = {"simulate": [common, design, shares], "fixed-point": [common, design, shares],
               "sweep": [common, design], "optimize": [common], "enumerate": [common],
               "compare": [common]}
    subs = {name: sub.add_parser(name, parents=parents[name], help=helptext)
            for name, (_, helptext) in COMMANDS.items()}
    subs["sweep"].add_argument("--beta-av", type=float, nargs="+",
                               help="AV time coefficients in 1/s (default: the scenario's)")
    subs["sweep"].add_argument("--p-min", type=float)
    subs["sweep"].add_argument("--p-max", type=float)
    subs["sweep"].add_argument("--p-step", type=float)
    subs["optimize"].add_argument("--no-baseline", action="store_true",
                                  help="skip the no-AV-lane reference run")
    for name in ("enumerate", "compare"):
        subs[name].add_argument("--workers", type=int, help="parallel worker processes")
    subs["compare"].add_argument("--tol", type=float, default=0.005, help="relative TSTT tolerance")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    func = COMMANDS[args.command][0]
    try:
        sc = _scenario(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return func(args, sc, out)
    except (ScenarioError, UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
