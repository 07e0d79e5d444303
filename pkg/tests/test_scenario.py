import json

import pytest
from hypothesis import given, settings, strategies as st

from fndp import scenario as S
from fndp.network import free_flow_path_time

from conftest import tiny_doc


def test_single_od_parameters(single_od):
    net = single_od.network
    fd = net.fd
    assert (fd.free_flow_speed, fd.capacity_regular, fd.capacity_av) == (90.0, 2160.0, 4320.0)
    assert (fd.wave_speed_regular, fd.wave_speed_av, fd.jam_density) == (12.2, 28.4, 200.0)
    assert net.demand.dt == 30.0 and net.demand.horizon == 6000.0
    assert net.demand.total(("1", "4")) == 2950.0
    od = net.od_pairs[0]
    assert od.beta_lv == pytest.approx(10 / 3600) and od.beta_av == 0.0018
    assert single_od.mode_split[("1", "4")] == 0.68
    assert single_od.design.bits(net.candidate_lanes) == (1, 1)
    assert [len(net.links[l].lane_ids) for l in ("2", "3")] == [4, 2]


@pytest.mark.parametrize("name", ["multi_od", "multi_od_multipath"])
def test_multi_od_layout(name):
    net = S.load(name).network
    main = ("2", "4", "5", "7", "8", "11", "12", "14", "16")
    assert sum(net.links[l].length for l in main) == pytest.approx(27.0)
    assert len(net.source_lanes) == 4 and len(net.sink_lanes) == 4
    assert len(net.od_pairs) == 6
    assert sum(net.demand.total(od.key) for od in net.od_pairs) == pytest.approx(3000.0)
    # all vehicles are released during the first 10 minutes of a 50-minute horizon
    assert net.demand.horizon == 3000.0
    assert max(r for prof in net.demand.entries.values() for r in prof) * net.demand.dt < 600.0
    assert len(net.candidate_lanes) == 9


def test_multipath_has_alternatives():
    net = S.load("multi_od_multipath").network
    assert all(len(od.paths) >= 2 for od in net.od_pairs)
    for od in net.od_pairs:
        assert len(set(od.paths)) == len(od.paths)
        assert all(free_flow_path_time(net, p) > 0 for p in od.paths)


def test_bad_share_names_the_field(single_od):
    doc = S.scenario_to_dict(single_od)
    doc["mode_split"]["1->4"] = 1.2
    with pytest.raises(S.ScenarioError, match="mode_split"):
        S.scenario_from_dict(doc)


@pytest.mark.parametrize("mutate, field", [
    (lambda d: d.pop("links"), "links"),
    (lambda d: d.update(schema_version=7), "schema_version"),
    (lambda d: d["time"].update(dt_s="30"), "dt_s"),
    (lambda d: d["od_pairs"][0].update(beta_av=True), "beta_av"),
    (lambda d: d["od_pairs"][0]["demand"].update(loading_steps=[]), "loading_steps"),
])
def test_errors_name_the_field(mutate, field):
    doc = tiny_doc()
    mutate(doc)
    with pytest.raises(S.ScenarioError, match=field):
        S.scenario_from_dict(doc)


def test_json_syntax_error_has_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "schema_version": 1,\n  "name": oops\n}')
    with pytest.raises(S.ScenarioError, match="line 3 column"):
        S.parse_scenario(p)
    with pytest.raises(S.ScenarioError, match="cannot read"):
        S.parse_scenario(tmp_path / "missing.json")
    with pytest.raises(S.ScenarioError, match="no bundled scenario"):
        S.load("nope")


@settings(max_examples=25, deadline=None)
@given(st.floats(10.0, 500.0), st.sampled_from([300.0, 600.0, 900.0]),
       st.lists(st.integers(0, 5), min_size=1, max_size=4, unique=True), st.booleans(),
       st.floats(0.0, 0.005))
def test_round_trip(tmp_path_factory, demand, horizon, loading, second, beta_av):
    doc = tiny_doc(demand=demand, horizon=horizon, loading=tuple(loading), second_link=second,
                   beta_av=beta_av)
    sc = S.scenario_from_dict(doc)
    out = tmp_path_factory.mktemp("rt") / "s.json"
    S.write_scenario(sc, out)
    again = S.parse_scenario(out)
    assert S.scenario_to_dict(again) == S.scenario_to_dict(sc)
    assert json.loads(out.read_text()) == S.scenario_to_dict(sc)


def test_bundled_round_trip(tmp_path, multi_od):
    S.write_scenario(multi_od, tmp_path / "m.json")
    assert S.scenario_to_dict(S.load(tmp_path / "m.json")) == S.scenario_to_dict(multi_od)


def test_knobs(single_od):
    sc = single_od.with_knobs(demand_scale=0.5, q_av_scale=2.0, beta_av_scale=0.5)
    net = sc.network
    assert net.demand.total(("1", "4")) == pytest.approx(1475.0)
    assert net.fd.capacity_av == 8640.0
    assert net.od_pairs[0].beta_av == pytest.approx(0.0009)
    # the base network is untouched
    assert single_od.network.demand.total(("1", "4")) == 2950.0
    with pytest.raises(S.ScenarioError, match="demand_scale"):
        single_od.with_knobs(demand_scale=0.0)


def test_overrides(single_od):
    sc = single_od.with_overrides(gap=1e-3, max_fp=None)
    assert sc.algorithm.gap == 1e-3 and sc.algorithm.max_fp == 500
    with pytest.raises(S.ScenarioError, match="msa_reset"):
        single_od.with_overrides(msa_reset="never")


def test_loading_window(multi_od):
    sc = multi_od.with_loading_window(300.0)
    dem = sc.network.demand
    for od in dem.entries:
        assert sorted(dem.entries[od]) == [0, 1, 2, 3, 4]
        assert dem.total(od) == pytest.approx(500.0)
    with pytest.raises(S.ScenarioError):
        multi_od.with_loading_window(0.0)
    with pytest.raises(S.ScenarioError):
        multi_od.with_loading_window(1e6)


def test_horizon(single_od):
    sc = single_od.with_horizon(3000.0)
    assert sc.network.demand.num_steps == 100
    with pytest.raises(S.ScenarioError, match="beyond"):
        single_od.with_horizon(300.0)
    with pytest.raises(S.ScenarioError):
        single_od.with_horizon(-1.0)
