import csv
import math

import pytest
from hypothesis import given, strategies as st

from fndp import scenario as S
from fndp.fixed_point import (SubproblemSolver, default_p_grid, find_crossings,
                              logit_response, run_fixed_point, sweep_shares)
from fndp.logit import ModeSplit, initial_shares, logit_share
from fndp.network import LaneDesign

from conftest import tiny_doc


def test_zero_demand_converges_immediately(doc_factory):
    net = S.scenario_from_dict(doc_factory(demand=0.0)).network
    p0 = initial_shares(net)
    fp = run_fixed_point(net, LaneDesign.zeros(net.candidate_lanes), p0)
    assert fp.converged and fp.iterations == 1
    assert fp.tstt == 0.0
    assert fp.shares[("s", "t")] == pytest.approx(p0[("s", "t")], abs=1e-12)
    # empty lanes report free-flow times for both classes
    assert fp.link_tt["A"] == (pytest.approx(32.0), pytest.approx(32.0))


def test_converged_split_is_a_fixed_point(tiny2):
    net = tiny2.network
    b = LaneDesign.from_bits(net.candidate_lanes, (1, 0))
    fp = run_fixed_point(net, b, initial_shares(net), epsilon_msa=1e-6, max_iter=300)
    assert fp.converged
    p = fp.shares[("s", "t")]
    tau_lv, tau_av = fp.od_tt[("s", "t")]
    resp = logit_share(tau_lv, tau_av, 10 / 3600, 0.0018)
    # the last averaging step moved p by less than the tolerance
    assert abs(resp - p) <= 1e-6 * (fp.msa_index)
    assert fp.trace[-1].residual <= 1e-6
    assert [s.msa_index for s in fp.trace] == list(range(1, fp.iterations + 1))


def test_iteration_limit_reports_unconverged(tiny2):
    net = tiny2.network
    b = LaneDesign.from_bits(net.candidate_lanes, (1, 1))
    fp = run_fixed_point(net, b, ModeSplit({("s", "t"): 0.01}), epsilon_msa=1e-12, max_iter=2)
    assert not fp.converged and fp.iterations == 2
    assert fp.tstt is not None and fp.shares is not None


def test_global_counter_start(tiny2):
    net = tiny2.network
    b = LaneDesign.zeros(net.candidate_lanes)
    fp = run_fixed_point(net, b, ModeSplit({("s", "t"): 0.2}), max_iter=3, msa_start=10)
    assert fp.trace[0].msa_index == 10
    first = fp.trace[0]
    assert first.averaged[("s", "t")] == pytest.approx((10 * 0.2 + first.logit[("s", "t")]) / 11)


def test_infeasible_split_is_flagged():
    net = S.scenario_from_dict(tiny_doc(demand=200.0, horizon=270.0, loading=(0, 1, 2),
                                        second_link=True)).network
    fp = run_fixed_point(net, LaneDesign.zeros(net.candidate_lanes), ModeSplit({("s", "t"): 0.8}))
    assert fp.infeasible and fp.farkas is not None
    assert fp.infeasible_shares[("s", "t")] == 0.8


def test_argument_checks(tiny):
    net = tiny.network
    b = LaneDesign.zeros(net.candidate_lanes)
    with pytest.raises(ValueError):
        run_fixed_point(net, b, initial_shares(net), epsilon_msa=0.0)
    with pytest.raises(ValueError):
        run_fixed_point(net, b, initial_shares(net), max_iter=0)


def test_trace_csv(tmp_path, tiny):
    net = tiny.network
    fp = run_fixed_point(net, LaneDesign.zeros(net.candidate_lanes), initial_shares(net))
    fp.write_trace_csv(tmp_path / "trace.csv")
    rows = list(csv.reader(open(tmp_path / "trace.csv")))
    assert rows[0] == ["iteration", "msa_index", "p_s->t", "p_logit_s->t", "p_next_s->t",
                       "residual", "tstt_veh_s"]
    assert len(rows) == fp.iterations + 1


def test_find_crossings():
    grid = [0.5, 0.6, 0.7, 0.8]
    assert find_crossings(grid, [0.55, 0.65, 0.65, 0.85]) == [(0.6, 0.7), (0.7, 0.8)]
    assert find_crossings(grid, [0.6, 0.7, 0.8, 0.9]) == []
    assert find_crossings(grid, [0.5, 0.5, 0.5, 0.5]) == [(0.5, 0.5)]
    assert find_crossings(grid, [0.9, 0.9, 0.9, 0.8]) == [(0.8, 0.8)]


@given(st.lists(st.floats(0, 1), min_size=2, max_size=30))
def test_crossings_bracket_sign_changes(values):
    grid = [round(0.5 + 0.01 * k, 2) for k in range(len(values))]
    for lo, hi in find_crossings(grid, values):
        i, j = grid.index(lo), grid.index(hi)
        gi, gj = values[i] - lo, values[j] - hi
        assert gi == 0 or gj == 0 or (gi > 0) != (gj > 0)


def test_default_grid():
    g = default_p_grid()
    assert len(g) == 50 and g[0] == 0.5 and g[-1] == 0.99


def test_symmetric_utilities_cross_at_half(doc_factory):
    net = S.scenario_from_dict(doc_factory(demand=0.0, beta_av=10 / 3600)).network
    rep = sweep_shares(net, LaneDesign.zeros(net.candidate_lanes), [0.4, 0.5, 0.6],
                       [10 / 3600])
    assert rep.crossings[10 / 3600] == [(0.5, 0.5)]
    assert rep.response[10 / 3600] == [pytest.approx(0.5, abs=1e-9)] * 3


def test_sweep_preconditions(multi_od, tiny):
    with pytest.raises(ValueError, match="single-OD"):
        sweep_shares(multi_od.network, LaneDesign.zeros(multi_od.network.candidate_lanes))
    net = tiny.network
    b = LaneDesign.zeros(net.candidate_lanes)
    with pytest.raises(ValueError):
        sweep_shares(net, b, [0.5, 1.2])
    with pytest.raises(ValueError):
        sweep_shares(net, b, [0.6, 0.5])


def test_sweep_reuses_solves_across_betas(tiny):
    net = tiny.network
    solver = SubproblemSolver(net)
    rep = sweep_shares(net, LaneDesign.zeros(net.candidate_lanes), [0.5, 0.7, 0.9],
                       [0.0, 0.0018, 0.004], solver=solver)
    assert solver.solves == 3
    for beta in rep.beta_av:
        for k, (tl, ta) in enumerate(rep.tau):
            assert rep.response[beta][k] == logit_share(tl, ta, 10 / 3600, beta)


def test_logit_response_override(tiny):
    net = tiny.network
    out = logit_response(net, {("s", "t"): (100.0, 100.0)}, beta_av=10 / 3600)
    assert out == {("s", "t"): 0.5}
    out = logit_response(net, {("s", "t"): (100.0, 100.0)})
    assert out[("s", "t")] == pytest.approx(1 / (math.exp(0.18 - 1000 / 3600) + 1))
