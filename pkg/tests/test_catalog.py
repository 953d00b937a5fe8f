import pytest
from hypothesis import given, strategies as st

from bfcprov.catalog import (EmptyChain, UnknownKind, instance_config, make_bfc_request,
                             profiled_demand)


def test_profiled_demand_calibration(ehr):
    prof = ehr.catalog.profile
    assert profiled_demand(prof, "F", ehr.use_case, 0) == 75
    small = instance_config(ehr.catalog, "F", "Small")
    assert profiled_demand(prof, "F", ehr.use_case, 10) == small.cpu_capacity == 500


def test_instance_config(ehr):
    small = instance_config(ehr.catalog, "F", "Small")
    assert (small.cpu_capacity, small.base_processing_delay) == (500, 0.3)
    assert instance_config(ehr.catalog, "F", "Large").cpu_capacity > small.cpu_capacity
    with pytest.raises(UnknownKind):
        instance_config(ehr.catalog, "NAT", "Small")


def test_make_request(ehr, streaming):
    r = make_bfc_request(ehr.use_case, ["F", "T"], 1)
    assert len(r.chain) == 2 and r.virtual_links == ((0, 1),)
    assert r.delay_bound == ehr.use_case.delay_bound
    assert make_bfc_request(streaming.use_case, ["F"], 1).virtual_links == ()
    with pytest.raises(EmptyChain):
        make_bfc_request(ehr.use_case, [], 1)


@given(st.integers(0, 500), st.integers(0, 500), st.sampled_from(["F", "T"]))
def test_demand_monotone(a, b, kind):
    from bfcprov.harness.scenarios import builtin_scenario
    sc = builtin_scenario("ehr")
    lo, hi = sorted((a, b))
    prof = sc.catalog.profile
    assert profiled_demand(prof, kind, sc.use_case, lo) <= profiled_demand(prof, kind, sc.use_case, hi)


@given(st.lists(st.sampled_from(["F", "T"]), min_size=1, max_size=6))
def test_virtual_links_form_a_path(kinds):
    from bfcprov.harness.scenarios import builtin_scenario
    r = make_bfc_request(builtin_scenario("ehr").use_case, kinds, 1)
    assert r.virtual_links == tuple((i, i + 1) for i in range(len(kinds) - 1))


def test_large_never_smaller(ehr):
    for k in ehr.catalog.kinds:
        assert (instance_config(ehr.catalog, k, "Large").cpu_capacity
                >= instance_config(ehr.catalog, k, "Small").cpu_capacity)
