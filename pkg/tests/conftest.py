import copy
import sys

import pytest

from fndp import scenario as S


def tiny_doc(demand=120.0, horizon=600.0, dt=30.0, loading=(0, 1), candidate=True,
             second_link=False, beta_av=0.0018):
    """A one- or two-link corridor with a regular lane and (optionally) a candidate lane."""
    lanes = [{"id": "A1"}]
    if candidate:
        lanes.append({"id": "A2", "kind": "candidate_av"})
    links = [{"id": "s", "kind": "source", "successors": ["A"]},
             {"id": "A", "kind": "freeway", "length_km": 0.8,
              "successors": ["B" if second_link else "t"], "lanes": lanes}]
    path = ["A"]
    if second_link:
        links.append({"id": "B", "kind": "freeway", "length_km": 0.8, "successors": ["t"],
                      "lanes": [{"id": "B1"}, {"id": "B2", "kind": "candidate_av"}]})
        path.append("B")
    links.append({"id": "t", "kind": "sink"})
    return {
        "schema_version": 1,
        "name": "tiny",
        "time": {"dt_s": dt, "horizon_s": horizon},
        "links": links,
        "od_pairs": [{"origin": "s", "destination": "t", "paths": [path],
                      "beta_lv": 10 / 3600, "beta_av": beta_av,
                      "demand": {"total_veh": demand, "loading_steps": list(loading)}}],
    }


@pytest.fixture
def tiny():
    return S.scenario_from_dict(tiny_doc())


@pytest.fixture
def tiny2():
    """Two candidate lanes in series, busy enough to congest."""
    return S.scenario_from_dict(tiny_doc(demand=300.0, horizon=900.0, loading=(0, 1, 2),
                                         second_link=True))


@pytest.fixture(scope="session")
def single_od():
    return S.load("single_od")


@pytest.fixture(scope="session")
def multi_od():
    return S.load("multi_od")


@pytest.fixture
def doc_factory():
    return lambda **kw: copy.deepcopy(tiny_doc(**kw))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines):
            terminalreporter.write_line(lines[key])
