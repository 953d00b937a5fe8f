"""Exhaustive ground truth for one chain request on a small infrastructure."""
from __future__ import annotations

from dataclasses import dataclass

from ..actions import Action, map_to, place
from ..catalog import BfcRequest, Catalog
from ..chainstate import (ChainStateError, InstanceId, ProvisioningState, apply_map, apply_place,
                          check_constraints, expected_latency)
from ..greedy import Infeasible
from ..topology import InfrastructureGraph, npop_candidates

MAX_CLUSTERS = 4
MAX_CHAIN = 3
MAX_SIZES = 2


class TooLargeToEnumerate(ValueError):
    pass


@dataclass(frozen=True)
class OracleResult:
    placements: int
    latency: float
    plan: tuple[Action, ...]
    resource_first: bool

    @property
    def key(self) -> tuple:
        if self.resource_first:
            return (self.placements, round(self.latency, 9))
        return (round(self.latency, 9), self.placements)


def _slot(state: ProvisioningState, inst: InstanceId) -> int:
    return state.instances_on(state.placements[inst].cluster, inst.kind).index(inst)


def brute_force_oracle(graph: InfrastructureGraph, catalog: Catalog, request: BfcRequest,
                       state: ProvisioningState | None = None,
                       objective: str | None = None) -> OracleResult:
    """Best feasible placement plus mapping for ``request``.

    Objective is lexicographic: (new placements, expected latency) for
    resource-first use cases, (expected latency, new placements) otherwise.
    ``objective`` ("count" or "latency") forces one order regardless of the
    use case. Instances already in ``state`` may be reused.
    """
    if objective not in (None, "count", "latency"):
        raise ValueError(f"objective must be 'count' or 'latency', got {objective!r}")
    kinds = request.kinds
    if len(graph.clusters) > MAX_CLUSTERS or len(request.chain) > MAX_CHAIN:
        raise TooLargeToEnumerate(
            f"{len(graph.clusters)} clusters / chain {len(request.chain)} exceeds "
            f"{MAX_CLUSTERS} / {MAX_CHAIN}")
    if any(len(catalog.size_labels(k)) > MAX_SIZES for k in set(kinds)):
        raise TooLargeToEnumerate(f"more than {MAX_SIZES} sizes for some kind")
    base = state.copy() if state is not None else ProvisioningState()
    # violations already present (e.g. re-profiled sessions) are not the plan's doing
    allowed = len(check_constraints(base, graph, catalog))
    clusters = sorted(npop_candidates(graph, request.ingress))
    resource_first = (request.use_case.resource_first if objective is None
                      else objective == "count")
    best: OracleResult | None = None
    n = len(request.chain)

    def search(work: ProvisioningState, q: int, plan: list[Action], new: int) -> None:
        nonlocal best
        if q == n:
            if len(check_constraints(work, graph, catalog)) > allowed:
                return
            cand = OracleResult(new, expected_latency(work, graph, catalog, request),
                                tuple(plan), resource_first)
            if best is None or cand.key < best.key:
                best = cand
            return
        kind = request.chain[q].kind
        for c in clusters:
            for inst in work.instances_on(c, kind):
                trial = work.copy()
                try:
                    apply_map(trial, graph, catalog, inst, request, q)
                except ChainStateError:
                    continue
                search(trial, q + 1, plan + [map_to(c, kind, _slot(trial, inst), q)], new)
            for size in catalog.size_labels(kind):
                trial = work.copy()
                try:
                    inst = apply_place(trial, graph, c, kind, size, catalog)
                    apply_map(trial, graph, catalog, inst, request, q)
                except ChainStateError:
                    continue
                search(trial, q + 1,
                       plan + [place(c, kind, size), map_to(c, kind, _slot(trial, inst), q)],
                       new + 1)

    search(base, 0, [], 0)
    if best is None:
        raise Infeasible(f"request {request.id}: no feasible placement and mapping")
    return best
