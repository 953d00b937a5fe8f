"""Live provisioning state: placements, request mappings and derived virtual links.

Every mutation goes through ``apply_*`` and is guarded so that, on profiled
demand, the constraint system keeps holding. ``reprofile`` is the one
unguarded change: it models clients joining a running request, which may push
an instance past its capacity.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

from .catalog import BfcRequest, Catalog, InstanceSize, instance_config, profiled_demand
from .topology import InfrastructureGraph, UnknownCluster, link_delay

EPS = 1e-9
SAME_CLUSTER = "SameCluster"


class ChainStateError(RuntimeError):
    pass


class InsufficientClusterCpu(ChainStateError):
    pass


class InsufficientInstanceHeadroom(ChainStateError):
    pass


class KindMismatch(ChainStateError):
    pass


class AlreadyMapped(ChainStateError):
    pass


class NotMapped(ChainStateError):
    pass


class UnroutableVirtualLink(ChainStateError):
    pass


class DelayBoundExceeded(ChainStateError):
    pass


class InstanceBusy(ChainStateError):
    pass


class UnknownInstance(ChainStateError, KeyError):
    pass


class RequestNotFullyMapped(ChainStateError):
    pass


class InstanceId(NamedTuple):
    kind: str
    serial: int

    def __str__(self):
        return f"{self.kind}{self.serial}"


@dataclass(slots=True)
class PlacementRecord:
    instance: InstanceId
    cluster: int
    size: InstanceSize
    placed_at: int
    last_active_at: int


@dataclass(frozen=True, slots=True)
class MappingRecord:
    request: int
    chain_position: int
    instance: InstanceId


@dataclass(frozen=True, slots=True)
class VirtualLinkRecord:
    request: int
    virtual_link: tuple[int, int]
    physical_link: tuple[int, int] | str


@dataclass(frozen=True, slots=True)
class Violation:
    constraint: str
    entity: object
    margin: float


@dataclass
class ProvisioningState:
    placements: dict[InstanceId, PlacementRecord] = field(default_factory=dict)
    # (request id, chain position) -> instance
    mapping: dict[tuple[int, int], InstanceId] = field(default_factory=dict)
    requests: dict[int, BfcRequest] = field(default_factory=dict)
    clock: int = 0
    next_serial: dict[str, int] = field(default_factory=dict)
    # instance -> set of (request, position) served
    served: dict[InstanceId, set[tuple[int, int]]] = field(default_factory=dict)

    @property
    def mappings(self) -> list[MappingRecord]:
        return [MappingRecord(f, q, i) for (f, q), i in self.mapping.items()]

    @property
    def virtual_links(self) -> list[VirtualLinkRecord]:
        out = []
        for f, req in self.requests.items():
            out.extend(_virtual_links(self, req, strict=False))
        return out

    def copy(self) -> "ProvisioningState":
        return ProvisioningState(
            placements={k: PlacementRecord(v.instance, v.cluster, v.size, v.placed_at,
                                           v.last_active_at)
                        for k, v in self.placements.items()},
            mapping=dict(self.mapping),
            requests=dict(self.requests),
            clock=self.clock,
            next_serial=dict(self.next_serial),
            served={k: set(v) for k, v in self.served.items()},
        )

    def is_live(self, inst: InstanceId) -> bool:
        return inst in self.placements

    def instances_on(self, cluster: int, kind: str | None = None) -> list[InstanceId]:
        """Live instances on a cluster in serial order (the slot order)."""
        out = [i for i, p in self.placements.items()
               if p.cluster == cluster and (kind is None or i.kind == kind)]
        out.sort(key=lambda i: (i.kind, i.serial))
        return out

    def is_fully_mapped(self, request_id: int) -> bool:
        req = self.requests.get(request_id)
        if req is None:
            return False
        return all((request_id, n.position) in self.mapping for n in req.chain)

    def unmapped_positions(self, request: BfcRequest) -> list[int]:
        return [n.position for n in request.chain if (request.id, n.position) not in self.mapping]


def _cluster_used(state: ProvisioningState, cluster: int) -> float:
    return sum(p.size.cpu_capacity for p in state.placements.values() if p.cluster == cluster)


def available_cpu(state: ProvisioningState, graph: InfrastructureGraph, cluster: int) -> float:
    cap = graph.cluster(cluster).cpu_capacity
    return cap - _cluster_used(state, cluster)


def instance_load(state: ProvisioningState, catalog: Catalog, inst: InstanceId) -> float:
    """Profiled demand currently mapped onto ``inst``."""
    total = 0.0
    for f, q in state.served.get(inst, ()):
        req = state.requests[f]
        total += profiled_demand(catalog.profile, inst.kind, req.use_case, req.client_count)
    return total


def instance_headroom(state: ProvisioningState, catalog: Catalog, inst: InstanceId) -> float:
    if inst not in state.placements:
        raise UnknownInstance(inst)
    return state.placements[inst].size.cpu_capacity - instance_load(state, catalog, inst)


def node_demand(catalog: Catalog, request: BfcRequest, position: int) -> float:
    kind = request.chain[position].kind
    return profiled_demand(catalog.profile, kind, request.use_case, request.client_count)


def _cluster_of(state: ProvisioningState, f: int, q: int) -> int | None:
    inst = state.mapping.get((f, q))
    if inst is None or inst not in state.placements:
        return None
    return state.placements[inst].cluster


def _virtual_links(state: ProvisioningState, request: BfcRequest, graph=None,
                   strict: bool = True) -> list[VirtualLinkRecord]:
    out = []
    for q, r in request.virtual_links:
        ci, cj = _cluster_of(state, request.id, q), _cluster_of(state, request.id, r)
        if ci is None or cj is None:
            continue
        if ci == cj:
            out.append(VirtualLinkRecord(request.id, (q, r), SAME_CLUSTER))
        elif graph is None or graph.has_link(ci, cj):
            out.append(VirtualLinkRecord(request.id, (q, r), (ci, cj)))
        elif strict:
            raise UnroutableVirtualLink(f"request {request.id} link {(q, r)}: no link {(ci, cj)}")
    return out


def derive_virtual_links(state: ProvisioningState, graph: InfrastructureGraph,
                         request: BfcRequest) -> list[VirtualLinkRecord]:
    """Physical route of every consecutive mapped pair of ``request``."""
    return _virtual_links(state, request, graph, strict=True)


def _latency_terms(state: ProvisioningState, graph: InfrastructureGraph,
                   request: BfcRequest) -> tuple[float, float]:
    links = 0.0
    for vl in _virtual_links(state, request, graph, strict=True):
        if vl.physical_link != SAME_CLUSTER:
            links += link_delay(graph, *vl.physical_link)
    proc = 0.0
    for n in request.chain:
        inst = state.mapping.get((request.id, n.position))
        if inst is not None and inst in state.placements:
            proc += state.placements[inst].size.base_processing_delay
    return links, proc


def partial_latency(state: ProvisioningState, graph: InfrastructureGraph,
                    request: BfcRequest) -> float:
    links, proc = _latency_terms(state, graph, request)
    return links + proc


def expected_latency(state: ProvisioningState, graph: InfrastructureGraph,
                     catalog: Catalog | None, request: BfcRequest) -> float:
    """Profiled end-to-end latency: link delays plus base processing delays."""
    if any((request.id, n.position) not in state.mapping for n in request.chain):
        raise RequestNotFullyMapped(request.id)
    return partial_latency(state, graph, request)


def check_constraints(state: ProvisioningState, graph: InfrastructureGraph, catalog: Catalog,
                      requests: Iterable[BfcRequest] | None = None) -> list[Violation]:
    """Evaluate the capacity, headroom, delay, liveness, uniqueness and routing constraints."""
    found: list[Violation] = []
    reqs = {r.id: r for r in (requests if requests is not None else state.requests.values())}
    for r in state.requests.values():
        reqs.setdefault(r.id, r)

    for c in graph.clusters:
        margin = c.cpu_capacity - _cluster_used(state, c.id)
        if margin < -EPS:
            found.append(Violation("cluster_capacity", c.id, margin))
    for inst, p in state.placements.items():
        if not graph.has_cluster(p.cluster):
            found.append(Violation("cluster_capacity", p.cluster, float("-inf")))

    for inst, p in state.placements.items():
        load = 0.0
        for (f, q), i in state.mapping.items():
            if i == inst and f in reqs:
                req = reqs[f]
                load += profiled_demand(catalog.profile, inst.kind, req.use_case, req.client_count)
        margin = p.size.cpu_capacity - load
        if margin < -EPS:
            found.append(Violation("instance_capacity", inst, margin))

    for (f, q), inst in state.mapping.items():
        if inst not in state.placements:
            found.append(Violation("liveness", (f, q, inst), -1.0))
        req = reqs.get(f)
        if req is None or not 0 <= q < len(req.chain):
            found.append(Violation("kind_match", (f, q), -1.0))
        elif req.chain[q].kind != inst.kind:
            found.append(Violation("kind_match", (f, q, inst), -1.0))

    for f, req in reqs.items():
        for q, r in req.virtual_links:
            ci, cj = _cluster_of(state, f, q), _cluster_of(state, f, r)
            if ci is not None and cj is not None and not graph.routable(ci, cj):
                found.append(Violation("routability", (f, (q, r), (ci, cj)), -1.0))
        if any(v.constraint == "routability" and v.entity[0] == f for v in found):
            continue
        lat = partial_latency(state, graph, req)
        if lat - req.delay_bound > EPS:
            found.append(Violation("delay_bound", f, req.delay_bound - lat))
    return found


def apply_place(state: ProvisioningState, graph: InfrastructureGraph, cluster: int, kind: str,
                size: InstanceSize | str, catalog: Catalog | None = None) -> InstanceId:
    if isinstance(size, str):
        if catalog is None:
            raise ValueError("a size label needs the catalog")
        size = instance_config(catalog, kind, size)
    if not graph.has_cluster(cluster):
        raise UnknownCluster(cluster)
    free = available_cpu(state, graph, cluster)
    if free + EPS < size.cpu_capacity:
        raise InsufficientClusterCpu(
            f"cluster {cluster}: {free:g} free < {size.cpu_capacity:g} needed")
    serial = state.next_serial.get(kind, 0)
    state.next_serial[kind] = serial + 1
    inst = InstanceId(kind, serial)
    state.placements[inst] = PlacementRecord(inst, cluster, size, state.clock, state.clock)
    state.served[inst] = set()
    return inst


def mapping_error(state: ProvisioningState, graph: InfrastructureGraph, catalog: Catalog,
                  inst: InstanceId, request: BfcRequest, position: int) -> ChainStateError | None:
    """The error ``apply_map`` would raise, without mutating anything."""
    if inst not in state.placements:
        return UnknownInstance(inst)
    if not 0 <= position < len(request.chain):
        return KindMismatch(f"request {request.id} has no position {position}")
    if request.chain[position].kind != inst.kind:
        return KindMismatch(f"position {position} wants {request.chain[position].kind}, got {inst}")
    if (request.id, position) in state.mapping:
        return AlreadyMapped((request.id, position))
    prev = state.requests.get(request.id)
    known = prev is not None
    # demand of the request as it will be once registered
    demand = node_demand(catalog, request, position)
    load = 0.0
    for f, q in state.served.get(inst, ()):
        r = request if f == request.id else state.requests[f]
        load += node_demand(catalog, r, q)
    cap = state.placements[inst].size.cpu_capacity
    if load + demand > cap + EPS:
        return InsufficientInstanceHeadroom(
            f"{inst}: {cap - load:g} headroom < {demand:g} demanded")
    cluster = state.placements[inst].cluster
    proc = 0.0
    links = 0.0
    for q in (position - 1, position + 1):
        if 0 <= q < len(request.chain):
            other = _cluster_of(state, request.id, q)
            if other is None:
                continue
            src, dst = (other, cluster) if q < position else (cluster, other)
            if not graph.routable(src, dst):
                return UnroutableVirtualLink(
                    f"request {request.id}: {q}<->{position} needs link {(src, dst)}")
    if known:
        links, proc = _latency_terms(state, graph, request)
    for q in (position - 1, position + 1):
        if 0 <= q < len(request.chain):
            other = _cluster_of(state, request.id, q)
            if other is not None and other != cluster:
                src, dst = (other, cluster) if q < position else (cluster, other)
                links += link_delay(graph, src, dst)
    proc += state.placements[inst].size.base_processing_delay
    if links + proc > request.delay_bound + EPS:
        return DelayBoundExceeded(
            f"request {request.id}: {links + proc:g} ms > bound {request.delay_bound:g}")
    return None


def apply_map(state: ProvisioningState, graph: InfrastructureGraph, catalog: Catalog,
              inst: InstanceId, request: BfcRequest, position: int) -> None:
    err = mapping_error(state, graph, catalog, inst, request, position)
    if err is not None:
        raise err
    state.requests[request.id] = request
    state.mapping[(request.id, position)] = inst
    state.served[inst].add((request.id, position))
    state.placements[inst].last_active_at = state.clock


def apply_unmap(state: ProvisioningState, request_id: int, position: int) -> InstanceId:
    """Release one chain position; the instance stays placed."""
    inst = state.mapping.pop((request_id, position), None)
    if inst is None:
        raise NotMapped((request_id, position))
    state.served[inst].discard((request_id, position))
    if inst in state.placements:
        state.placements[inst].last_active_at = state.clock
    return inst


def apply_destroy(state: ProvisioningState, inst: InstanceId) -> None:
    if inst not in state.placements:
        raise UnknownInstance(inst)
    if state.served.get(inst):
        raise InstanceBusy(f"{inst} still serves {sorted(state.served[inst])}")
    del state.placements[inst]
    state.served.pop(inst, None)


def reprofile(state: ProvisioningState, request_id: int, clients: int) -> None:
    """Change the client count of a registered request in place."""
    state.requests[request_id] = state.requests[request_id].with_clients(clients)


def release_request(state: ProvisioningState, request_id: int) -> None:
    req = state.requests.get(request_id)
    if req is None:
        return
    for n in req.chain:
        if (request_id, n.position) in state.mapping:
            apply_unmap(state, request_id, n.position)
    del state.requests[request_id]


def placement_count(state: ProvisioningState) -> int:
    return len(state.placements)


def objective_pair(state: ProvisioningState, graph: InfrastructureGraph, catalog: Catalog,
                   request: BfcRequest) -> tuple[int, float]:
    return placement_count(state), expected_latency(state, graph, catalog, request)


def dump_state(state: ProvisioningState) -> str:
    """One placement or mapping per line, sorted, for golden files and logs."""
    lines = [f"clock {state.clock}"]
    for inst in sorted(state.placements):
        p = state.placements[inst]
        lines.append(f"place {inst.kind} {inst.serial} cluster={p.cluster} size={p.size.label} "
                     f"placed_at={p.placed_at} last_active_at={p.last_active_at}")
    for (f, q) in sorted(state.mapping):
        inst = state.mapping[(f, q)]
        lines.append(f"map request={f} position={q} instance={inst.kind}{inst.serial}")
    return "\n".join(lines) + "\n"


def move_error(state: ProvisioningState, graph: InfrastructureGraph, catalog: Catalog,
               inst: InstanceId, request: BfcRequest, position: int) -> ChainStateError | None:
    """Like ``mapping_error`` but as if ``position`` were first released."""
    key = (request.id, position)
    old = state.mapping.get(key)
    if old is None:
        return mapping_error(state, graph, catalog, inst, request, position)
    if old == inst:
        return AlreadyMapped(key)
    del state.mapping[key]
    state.served[old].discard(key)
    try:
        return mapping_error(state, graph, catalog, inst, request, position)
    finally:
        state.mapping[key] = old
        state.served[old].add(key)


def apply_move(state: ProvisioningState, graph: InfrastructureGraph, catalog: Catalog,
               inst: InstanceId, request: BfcRequest, position: int) -> InstanceId:
    """Re-map an already mapped position onto ``inst``; returns the old instance."""
    err = move_error(state, graph, catalog, inst, request, position)
    if err is not None:
        raise err
    old = apply_unmap(state, request.id, position)
    apply_map(state, graph, catalog, inst, request, position)
    return old
