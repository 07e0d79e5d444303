import math

import pytest
from hypothesis import given, strategies as st

from fndp.logit import (BETA_AV, BETA_LV, ModeSplit, class_demands, initial_shares,
                        logit_share, msa_update, msa_update_split)

from oracles import logit_reference

times = st.floats(0.0, 5000.0)
betas = st.floats(0.0, 0.01)


def test_logit_examples():
    assert logit_share(300.0, 300.0, 0.002, 0.002) == 0.5
    # exponent ln 3
    assert logit_share(0.0, math.log(3.0), 1.0, 1.0) == pytest.approx(0.25, abs=1e-15)
    assert logit_share(0.0, 0.0, BETA_LV, BETA_AV) == 0.5


def test_logit_clamp_flags_extreme_exponents():
    flags = []
    assert logit_share(0.0, 1e6, 1.0, 1.0, flags) == pytest.approx(1.0 / (math.exp(500.0) + 1.0))
    assert flags and "clamped" in flags[0]
    assert logit_share(1e6, 0.0, 1.0, 1.0, flags) == pytest.approx(1.0)


@given(times, times, betas, betas)
def test_logit_matches_utility_form(tl, ta, bl, ba):
    assert logit_share(tl, ta, bl, ba) == pytest.approx(logit_reference(tl, ta, bl, ba), abs=1e-12)


@given(times, times, betas, betas)
def test_logit_bounds_and_monotonicity(tl, ta, bl, ba):
    p = logit_share(tl, ta, bl, ba)
    assert 0.0 <= p <= 1.0
    assert logit_share(tl, ta + 10.0, bl, ba) <= p + 1e-15
    assert logit_share(tl + 10.0, ta, bl, ba) >= p - 1e-15


def test_class_demands_examples():
    assert class_demands(2950.0, 0.0) == (2950.0, 0.0)
    assert class_demands(2950.0, 1.0) == (0.0, 2950.0)
    lv, av = class_demands(2950.0, 0.68)
    assert lv == pytest.approx(944.0, abs=1e-9) and av == pytest.approx(2006.0, abs=1e-9)
    with pytest.raises(ValueError):
        class_demands(-1.0, 0.5)
    with pytest.raises(ValueError):
        class_demands(10.0, 1.2)


@given(st.floats(0, 1e5), st.floats(0, 1))
def test_class_demands_conserve_total(d, p):
    lv, av = class_demands(d, p)
    assert lv + av == pytest.approx(d, rel=1e-12, abs=1e-12)
    assert lv >= 0 and av >= 0


def test_msa_examples():
    assert msa_update(0.5, 0.7, 1) == pytest.approx(0.6, abs=1e-15)
    assert msa_update(0.6, 0.68, 3) == pytest.approx(0.62, abs=1e-15)
    assert msa_update(0.37, 0.37, 17) == 0.37
    with pytest.raises(ValueError):
        msa_update(0.5, 0.5, 0)


@given(st.floats(0, 1), st.floats(0, 1), st.integers(1, 10_000))
def test_msa_stays_between_inputs(p, q, n):
    out = msa_update(p, q, n)
    assert min(p, q) <= out <= max(p, q)
    assert abs(out - p) == pytest.approx(abs(q - p) / (n + 1), abs=1e-15)


def test_initial_shares(single_od, multi_od, doc_factory):
    from fndp import scenario as S
    equal = S.scenario_from_dict(doc_factory(beta_av=10 / 3600)).network
    assert initial_shares(equal).shares == {("s", "t"): 0.5}
    # free-flow time through the single-OD corridor: 0.8 + 0.8 km at 90 km/h
    tau = 64.0
    expect = logit_reference(tau, tau, 10 / 3600, 0.0018)
    assert initial_shares(single_od.network)[("1", "4")] == pytest.approx(expect, abs=1e-15)
    for p in initial_shares(multi_od.network).shares.values():
        assert 0.5 < p < 1.0  # AVs value time less, so they start as the majority


def test_mode_split_validation_and_helpers():
    with pytest.raises(ValueError):
        ModeSplit({("a", "b"): 1.2})
    with pytest.raises(ValueError):
        ModeSplit({("a", "b"): float("nan")})
    p = ModeSplit({("a", "b"): 0.2, ("c", "d"): 0.4})
    q = msa_update_split(p, {("a", "b"): 0.4, ("c", "d"): 0.4}, 1)
    assert q[("a", "b")] == pytest.approx(0.3)
    assert p.distance(q) == pytest.approx(0.1)
