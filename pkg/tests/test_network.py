import pytest
from hypothesis import given, strategies as st

from fndp import scenario as S
from fndp.network import (CONNECTOR_CAPACITY, LaneDesign, LaneKind, free_flow_path_time,
                          lane_adjacency, link_successors, natural_key, validate_network)


def test_single_od_is_valid(single_od):
    assert validate_network(single_od.network) == []


def test_cfl_violation_reported_for_each_physical_lane(doc_factory):
    doc = S.scenario_to_dict(S.load("single_od"))
    doc["time"]["dt_s"] = 40.0
    doc["time"]["horizon_s"] = 6000.0
    for od in doc["od_pairs"]:
        od["demand"] = {"total_veh": 10.0, "loading_steps": [0]}
    with pytest.raises(S.ScenarioError) as err:
        S.scenario_from_dict(doc)
    msg = str(err.value)
    for lane in ("2a", "2b", "2c", "2d", "3a", "3b"):
        assert f"lane {lane}: CFL violated" in msg
    assert "lane 1:" not in msg and "lane 4:" not in msg


def test_missing_regular_lane_breaks_lv_path_rule():
    doc = S.scenario_to_dict(S.load("single_od"))
    for link in doc["links"]:
        if link["id"] == "3":
            link["lanes"] = [ln for ln in link["lanes"] if ln["id"] != "3a"]
    with pytest.raises(S.ScenarioError, match="LV-path rule"):
        S.scenario_from_dict(doc)


def test_free_flow_path_time(single_od):
    net = single_od.network
    assert free_flow_path_time(net, ["2"]) == pytest.approx(32.0)
    assert free_flow_path_time(net, []) == 0.0
    with pytest.raises(KeyError):
        free_flow_path_time(net, ["nope"])


def test_multi_od_path_free_flow_time(multi_od):
    net = multi_od.network
    od = next(o for o in net.od_pairs if o.key == ("1", "13"))
    # recomputed from the link lengths in the scenario file
    length = sum(net.links[l].length for l in od.paths[0])
    assert free_flow_path_time(net, od.paths[0]) == pytest.approx(length / 90.0 * 3600.0)


def test_lane_adjacency(single_od):
    net = single_od.network
    assert lane_adjacency(net, "1") == ((), ("2a", "2b", "2c", "2d"))
    assert lane_adjacency(net, "4") == (("3a", "3b"), ())
    assert lane_adjacency(net, "2a") == (("1",), ("3a", "3b"))
    assert lane_adjacency(net, "3b") == (("2a", "2b", "2c", "2d"), ("4",))
    with pytest.raises(KeyError):
        lane_adjacency(net, "zz")


def test_lane_sets_and_parameters(single_od):
    net = single_od.network
    assert net.candidate_lanes == ("2d", "3b")
    assert net.source_lanes == ("1",) and net.sink_lanes == ("4",)
    assert net.lanes["2d"].kind == LaneKind.CANDIDATE
    assert net.capacity("2a") == 2160.0
    assert net.capacity("1") == CONNECTOR_CAPACITY
    assert net.jam_density("3a") == 200.0
    assert link_successors(net, "2") == {"3"}


def test_lane_design_roundtrip():
    lanes = ("a", "b", "c")
    d = LaneDesign.from_bits(lanes, (1, 0, 1))
    assert d.bits(lanes) == (1, 0, 1)
    assert d.count() == 2 and d["a"] == 1
    assert LaneDesign.zeros(lanes).count() == 0
    with pytest.raises(ValueError):
        LaneDesign.from_bits(lanes, (1, 0))


@given(st.lists(st.from_regex(r"[0-9]{1,3}[a-c]?", fullmatch=True), min_size=1, max_size=8))
def test_natural_key_orders_numbers_numerically(ids):
    ordered = sorted(ids, key=natural_key)
    nums = [int("".join(ch for ch in s if ch.isdigit())) for s in ordered]
    assert nums == sorted(nums)
