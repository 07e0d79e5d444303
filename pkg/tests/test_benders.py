import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fndp import scenario as S
from fndp.benders import (FEASIBILITY, OPTIMALITY, BendersConfig, Cut, MasterExhausted,
                          audit_cuts, feasibility_cut, optimality_cut, optimize, solve_master)
from fndp.fixed_point import SubproblemSolver
from fndp.logit import ModeSplit, initial_shares
from fndp.lp import EPS_GAP, Status
from fndp.network import LaneDesign
from fndp.sodta import SubproblemOptions

from conftest import tiny_doc


def opt_cut(const, coeffs, lanes):
    return Cut(OPTIMALITY, const, tuple(coeffs), tuple(lanes))


def feas_cut(const, coeffs, lanes):
    return Cut(FEASIBILITY, const, tuple(coeffs), tuple(lanes))


class TestMaster:
    def test_no_cuts(self):
        b, z = solve_master([], ("x", "y"))
        assert b.bits(("x", "y")) == (0, 0) and z == 0.0

    def test_single_optimality_cut(self):
        b, z = solve_master([opt_cut(10.0, [-4.0], ["x"])], ("x",))
        assert b.bits(("x",)) == (1,) and z == 6.0

    def test_feasibility_then_optimality(self):
        cuts = [feas_cut(1.0, [-1.0], ["x"]), opt_cut(5.0, [1.0], ["x"])]
        b, z = solve_master(cuts, ("x",))
        assert b.bits(("x",)) == (1,) and z == 6.0

    def test_everything_excluded(self):
        with pytest.raises(MasterExhausted):
            solve_master([feas_cut(1.0, [0.0], ["x"])], ("x",))

    def test_lane_mismatch(self):
        with pytest.raises(ValueError):
            solve_master([opt_cut(1.0, [1.0], ["y"])], ("x",))

    def test_no_candidates(self):
        b, z = solve_master([opt_cut(7.0, [], [])], ())
        assert b.count() == 0 and z == 7.0

    @settings(max_examples=50)
    @given(st.integers(1, 5).flatmap(lambda n: st.tuples(
        st.just(n),
        st.lists(st.tuples(st.floats(-50, 50), st.lists(st.floats(-20, 20), min_size=n, max_size=n),
                           st.booleans()), max_size=6))))
    def test_matches_brute_force(self, data):
        n, raw = data
        lanes = tuple(f"l{k}" for k in range(n))
        cuts = [(feas_cut if f else opt_cut)(c, g, lanes) for c, g, f in raw]
        best, best_bits = math.inf, None
        for k in range(2 ** n):
            bits = tuple(int(ch) for ch in format(k, f"0{n}b"))
            if any(c.kind == FEASIBILITY and c.value(bits) > 1e-7 * max(1, abs(c.constant)) for c in cuts):
                continue
            z = max([0.0] + [c.value(bits) for c in cuts if c.kind == OPTIMALITY])
            if z < best - 1e-9:
                best, best_bits = z, bits
        try:
            b, z = solve_master(cuts, lanes)
        except MasterExhausted:
            assert best_bits is None
            return
        assert z == pytest.approx(best, abs=1e-9)
        assert b.bits(lanes) == best_bits


def _sp(net, bits, p):
    solver = SubproblemSolver(net)
    b = LaneDesign.from_bits(net.candidate_lanes, bits)
    tpl, out, rhs = solver.solve(b, p)
    return tpl.paramlp(b, p), out


def test_optimality_cut_tight_and_valid(single_od):
    net = single_od.network
    p = ModeSplit({("1", "4"): 0.68})
    plp, out = _sp(net, (0, 0), p)
    cut = optimality_cut(out.duals, plp, p, out.reduced_costs)
    assert cut.value((0, 0)) == pytest.approx(out.objective, rel=EPS_GAP)
    for bits in [(1, 0), (0, 1), (1, 1)]:
        _, other = _sp(net, bits, p)
        assert cut.value(bits) <= other.objective * (1 + EPS_GAP)


def test_zero_duals_give_vacuous_cut(tiny2):
    net = tiny2.network
    p = ModeSplit({("s", "t"): 0.5})
    plp, _ = _sp(net, (0, 0), p)
    cut = optimality_cut(np.zeros(plp.lp.num_rows), plp, p)
    assert cut.constant == 0.0 and not any(cut.coeffs)
    with pytest.raises(ValueError):
        optimality_cut(None, plp, p)
    with pytest.raises(ValueError):
        optimality_cut(np.zeros(3), plp, p)


def tight_net():
    # at the initial split only the design with both AV lanes clears the demand in time
    return S.scenario_from_dict(tiny_doc(demand=145.0, horizon=270.0, loading=(0, 1, 2),
                                         second_link=True)).network


def test_feasibility_cut_excludes_provenance_only_when_infeasible():
    net = tight_net()
    p = initial_shares(net)
    plp, out = _sp(net, (0, 0), p)
    assert out.status == Status.INFEASIBLE
    cut = feasibility_cut(out.farkas, plp, p)
    assert cut.excludes((0, 0))
    for bits in [(0, 0), (1, 0), (0, 1), (1, 1)]:
        _, other = _sp(net, bits, p)
        if other.status == Status.OPTIMAL:
            assert cut.value(bits) <= 1e-7 * max(1.0, abs(cut.constant))
        assert cut.value(bits) <= 0 or other.status == Status.INFEASIBLE


def test_feasibility_cut_rejects_bad_rays():
    net = tight_net()
    p = initial_shares(net)
    plp, out = _sp(net, (0, 0), p)
    with pytest.raises(ValueError):
        feasibility_cut(np.zeros(plp.lp.num_rows), plp, p)
    with pytest.raises(ValueError):
        feasibility_cut(-out.farkas, plp, p)
    with pytest.raises(ValueError):
        feasibility_cut(out.farkas[:-1], plp, p)


def test_optimize_tight_network_uses_feasibility_cuts():
    net = tight_net()
    res = optimize(net, BendersConfig())
    assert res.status == "optimal"
    assert res.design.bits(net.candidate_lanes) == (1, 1)
    assert any(c.kind == FEASIBILITY for c in res.cuts)
    for rec in audit_cuts(net, res):
        assert rec["ok"], rec


def test_optimize_small_network(tiny2):
    net = tiny2.network
    log = []
    res = optimize(net, BendersConfig(), progress=log.append)
    assert res.status == "optimal" and res.converted >= 1
    ubs = [r.ub for r in res.log]
    assert all(b <= a for a, b in zip(ubs, ubs[1:]))
    assert len(log) == res.benders_iterations
    assert res.baseline_tstt >= res.tstt
    assert res.gap <= 1e-4
    for rec in audit_cuts(net, res):
        assert rec["ok"], rec
    doc = res.to_json()
    json.dumps(doc)
    assert doc["converted_lanes"] == res.converted
    assert doc["reduction_pct"] == pytest.approx(res.reduction_pct)


def test_optimize_without_candidates(doc_factory):
    net = S.scenario_from_dict(doc_factory(candidate=False)).network
    res = optimize(net)
    assert res.design.count() == 0 and res.gap == 0.0
    # the first pass only seeds the bound, the second closes the gap
    assert res.status == "optimal" and res.benders_iterations == 2


def test_lane_type_mode_rejected(tiny2):
    cfg = BendersConfig(options=SubproblemOptions(wave_speed_mode="lane-type"))
    with pytest.raises(ValueError, match="lane-type"):
        optimize(tiny2.network, cfg)


def test_iteration_limit(tiny2):
    res = optimize(tiny2.network, BendersConfig(max_benders=1), with_baseline=False)
    assert res.status == "limit" and not res.converged
    assert res.benders_iterations == 1


def test_global_msa_counter(tiny2):
    res = optimize(tiny2.network, BendersConfig(msa_reset="global"), with_baseline=False)
    assert res.status == "optimal"


def test_result_files(tmp_path, tiny2):
    res = optimize(tiny2.network, with_baseline=False)
    res.write_json(tmp_path / "r.json")
    res.write_log_csv(tmp_path / "log.csv")
    head = (tmp_path / "log.csv").read_text().splitlines()[0]
    assert "tstt_veh_s" in head and "ub_veh_s" in head
    assert json.loads((tmp_path / "r.json").read_text())["status"] == "optimal"
