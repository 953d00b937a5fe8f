import pytest

from bfcprov.catalog import ProfileEntry, make_bfc_request
from bfcprov.chainstate import (SAME_CLUSTER, AlreadyMapped, InstanceBusy, InsufficientClusterCpu,
                                InsufficientInstanceHeadroom, InstanceId, KindMismatch,
                                ProvisioningState, RequestNotFullyMapped, UnknownInstance,
                                UnroutableVirtualLink, apply_destroy, apply_map, apply_place,
                                available_cpu, check_constraints, derive_virtual_links,
                                expected_latency, instance_headroom, objective_pair,
                                placement_count)
from bfcprov.topology import build_infrastructure


@pytest.fixture
def graph():
    return build_infrastructure(
        [{"id": i, "cpu_capacity": 4000} for i in (1, 2, 3)],
        [{"from": 1, "to": 2, "delay": 1.0}, {"from": 2, "to": 1, "delay": 1.0}])


@pytest.fixture
def cat(ehr):
    return ehr.catalog


@pytest.fixture
def req(ehr):
    return make_bfc_request(ehr.use_case, ["F", "T"], 1, request_id=0, ingress=1, egress=2)


def test_available_cpu(graph, cat, state):
    assert available_cpu(state, graph, 1) == 4000
    apply_place(state, graph, 1, "F", "Small", cat)
    assert available_cpu(state, graph, 1) == 3500


def test_eighth_small_fills_cluster_ninth_fails(graph, cat, state):
    for _ in range(8):
        apply_place(state, graph, 1, "F", "Small", cat)
    assert available_cpu(state, graph, 1) == 0
    with pytest.raises(InsufficientClusterCpu):
        apply_place(state, graph, 1, "F", "Small", cat)


def test_first_placement_id(graph, cat, state):
    assert apply_place(state, graph, 1, "F", "Small", cat) == InstanceId("F", 0)


def test_headroom(graph, cat, state, ehr):
    f = apply_place(state, graph, 1, "F", "Small", cat)
    assert instance_headroom(state, cat, f) == 500
    r5 = make_bfc_request(ehr.use_case, ["F", "T"], 5, request_id=1, ingress=1, egress=2)
    apply_map(state, graph, cat, f, r5, 0)
    assert instance_headroom(state, cat, f) == pytest.approx(212.5)
    r_full = make_bfc_request(ehr.use_case, ["F"], 10, request_id=2, ingress=1)
    g = apply_place(state, graph, 1, "F", "Small", cat)
    apply_map(state, graph, cat, g, r_full, 0)
    assert instance_headroom(state, cat, g) == pytest.approx(0.0)


def test_expected_latency_split_and_colocated(graph, cat, req):
    split = ProvisioningState()
    apply_map(split, graph, cat, apply_place(split, graph, 1, "F", "Small", cat), req, 0)
    apply_map(split, graph, cat, apply_place(split, graph, 2, "T", "Small", cat), req, 1)
    assert expected_latency(split, graph, cat, req) == pytest.approx(1.6)
    assert objective_pair(split, graph, cat, req) == (2, pytest.approx(1.6))
    near = ProvisioningState()
    apply_map(near, graph, cat, apply_place(near, graph, 1, "F", "Small", cat), req, 0)
    apply_map(near, graph, cat, apply_place(near, graph, 1, "T", "Small", cat), req, 1)
    assert objective_pair(near, graph, cat, req) == (2, pytest.approx(0.6))
    assert derive_virtual_links(near, graph, req)[0].physical_link == SAME_CLUSTER


def test_unmapped_latency_raises(graph, cat, req, state):
    with pytest.raises(RequestNotFullyMapped):
        expected_latency(state, graph, cat, req)
    assert placement_count(state) == 0


def test_map_sequence_and_isolation(graph, cat, req, state):
    f = apply_place(state, graph, 1, "F", "Small", cat)
    apply_map(state, graph, cat, f, req, 0)
    assert derive_virtual_links(state, graph, req) == []
    t3 = apply_place(state, graph, 3, "T", "Small", cat)
    with pytest.raises(UnroutableVirtualLink):
        apply_map(state, graph, cat, t3, req, 1)
    t2 = apply_place(state, graph, 2, "T", "Small", cat)
    apply_map(state, graph, cat, t2, req, 1)
    vl = derive_virtual_links(state, graph, req)
    assert [(v.virtual_link, v.physical_link) for v in vl] == [((0, 1), (1, 2))]


def test_map_guards(graph, cat, req, state, ehr):
    f = apply_place(state, graph, 1, "F", "Small", cat)
    with pytest.raises(KindMismatch):
        apply_map(state, graph, cat, f, req, 1)
    apply_map(state, graph, cat, f, req, 0)
    with pytest.raises(AlreadyMapped):
        apply_map(state, graph, cat, f, req, 0)
    big = make_bfc_request(ehr.use_case, ["F"], 12, request_id=5, ingress=1)
    with pytest.raises(InsufficientInstanceHeadroom):
        apply_map(state, graph, cat, f, big, 0)


def test_destroy(graph, cat, req, state):
    idle = apply_place(state, graph, 1, "F", "Small", cat)
    apply_destroy(state, idle)
    with pytest.raises(UnknownInstance):
        apply_destroy(state, idle)
    busy = apply_place(state, graph, 1, "F", "Small", cat)
    apply_map(state, graph, cat, busy, req, 0)
    with pytest.raises(InstanceBusy):
        apply_destroy(state, busy)
    # serials are never reused
    assert busy.serial == 1


def test_violations_are_reported(graph, cat, ehr, state):
    f = apply_place(state, graph, 1, "F", "Small", cat)
    r = make_bfc_request(ehr.use_case, ["F"], 1, request_id=0, ingress=1)
    apply_map(state, graph, cat, f, r, 0)
    assert check_constraints(state, graph, cat) == []
    # hand-built overload: demand 600 on a 500 instance
    cat600 = cat.with_profile({**cat.profile, ("F", "EHR"): ProfileEntry(600, 0)})
    v = check_constraints(state, graph, cat600)
    assert [(x.constraint, x.entity, x.margin) for x in v] == [("instance_capacity", f, -100)]
    # a mapping that points at a destroyed instance
    del state.placements[f]
    assert "liveness" in {x.constraint for x in check_constraints(state, graph, cat)}
