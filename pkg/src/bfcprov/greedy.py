"""Greedy map-first, place-on-failure chain deployment."""
from __future__ import annotations

from .actions import NO_OP, Action, destroy, map_to, place
from .catalog import BfcRequest, Catalog
from .chainstate import (EPS, ProvisioningState, apply_map, apply_place, available_cpu,
                         mapping_error, node_demand)
from .topology import InfrastructureGraph, npop_candidates


class Infeasible(RuntimeError):
    pass


def scan_order(graph: InfrastructureGraph, request: BfcRequest, position: int,
               candidates: frozenset[int] | None = None) -> list[int]:
    """Candidate clusters for ``position``: its anchor first, then ascending id."""
    if candidates is None:
        candidates = npop_candidates(graph, request.ingress)
    anchor = request.anchor(position)
    rest = sorted(c for c in candidates if c != anchor)
    return ([anchor] if anchor in candidates else []) + rest


def _slot(state: ProvisioningState, inst) -> int:
    cluster = state.placements[inst].cluster
    return state.instances_on(cluster, inst.kind).index(inst)


def greedy_provision(graph: InfrastructureGraph, state: ProvisioningState, catalog: Catalog,
                     request: BfcRequest, *, candidates: frozenset[int] | None = None,
                     max_slots: int | None = None) -> list[Action]:
    """Plan that maps every unmapped position of ``request``.

    Existing instances are tried first on every candidate cluster; a new
    instance (smallest size covering the profiled demand) is placed only when
    no mapping fits. ``state`` is not modified.
    """
    work = state.copy()
    plan: list[Action] = []
    for position in work.unmapped_positions(request):
        kind = request.chain[position].kind
        order = scan_order(graph, request, position, candidates)
        chosen = None
        for cluster in order:
            for inst in work.instances_on(cluster, kind):
                if mapping_error(work, graph, catalog, inst, request, position) is None:
                    chosen = inst
                    break
            if chosen is not None:
                break
        if chosen is None:
            demand = node_demand(catalog, request, position)
            size = next((s for s in catalog.size_labels(kind)
                         if catalog.sizes[kind][s].cpu_capacity + EPS >= demand), None)
            if size is None:
                raise Infeasible(f"request {request.id}: no size of {kind} covers {demand:g}")
            cfg = catalog.sizes[kind][size]
            for cluster in order:
                if available_cpu(work, graph, cluster) + EPS < cfg.cpu_capacity:
                    continue
                if max_slots is not None and len(work.instances_on(cluster, kind)) >= max_slots:
                    continue
                trial = work.copy()
                inst = apply_place(trial, graph, cluster, kind, cfg)
                if mapping_error(trial, graph, catalog, inst, request, position) is None:
                    work = trial
                    plan.append(place(cluster, kind, size))
                    chosen = inst
                    break
            if chosen is None:
                raise Infeasible(f"request {request.id}: nowhere to place {kind} for q{position}")
        cluster = work.placements[chosen].cluster
        plan.append(map_to(cluster, kind, _slot(work, chosen), position))
        apply_map(work, graph, catalog, chosen, request, position)
    return plan


def heuristic_suggest(graph: InfrastructureGraph, state: ProvisioningState, catalog: Catalog,
                      pending: BfcRequest | None, *, idle_timeout: int | None = None,
                      candidates: frozenset[int] | None = None,
                      max_slots: int | None = None) -> Action:
    """Next action the heuristic would take: provision, reap, or nothing."""
    if pending is not None:
        try:
            plan = greedy_provision(graph, state, catalog, pending,
                                    candidates=candidates, max_slots=max_slots)
        except Infeasible:
            plan = []
        if plan:
            return plan[0]
    if idle_timeout is not None:
        idle = [(p.last_active_at, inst) for inst, p in state.placements.items()
                if not state.served.get(inst) and state.clock - p.last_active_at > idle_timeout]
        if idle:
            _, inst = min(idle)
            cluster = state.placements[inst].cluster
            return destroy(cluster, inst.kind, _slot(state, inst))
    return NO_OP
