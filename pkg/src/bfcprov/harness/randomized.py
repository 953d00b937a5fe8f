"""Random small provisioning instances for property and regression checks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..catalog import BfcRequest, Catalog, InstanceSize, ProfileEntry, UseCase, make_bfc_request
from ..chainstate import ChainStateError, ProvisioningState, apply_place
from ..topology import Affiliation, InfrastructureGraph, build_infrastructure, npop_candidates

KINDS = ("F", "T")


@dataclass
class SmallInstance:
    graph: InfrastructureGraph
    catalog: Catalog
    request: BfcRequest
    state: ProvisioningState


def _uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    return round(float(rng.uniform(lo, hi)), 3)


def random_graph(rng: np.random.Generator, max_clusters: int = 4) -> InfrastructureGraph:
    n = int(rng.integers(1, max_clusters + 1))
    affiliations = list(Affiliation)
    clusters = [{"id": i + 1, "cpu_capacity": _uniform(rng, 400, 3000),
                 "affiliation": affiliations[int(rng.integers(len(affiliations)))].value}
                for i in range(n)]
    links = [(i, j, _uniform(rng, 0.1, 2.5))
             for i in range(1, n + 1) for j in range(1, n + 1)
             if i != j and rng.random() < 0.6]
    return build_infrastructure(clusters, links)


def random_catalog(rng: np.random.Generator, use_case: str) -> Catalog:
    sizes = {}
    profile = {}
    for k in KINDS:
        small = _uniform(rng, 200, 600)
        sizes[k] = {"Small": InstanceSize("Small", small, _uniform(rng, 0.1, 0.8)),
                    "Large": InstanceSize("Large", round(small * _uniform(rng, 1.4, 2.5), 3),
                                          _uniform(rng, 0.1, 0.8))}
        profile[(k, use_case)] = ProfileEntry(_uniform(rng, 20, 120), _uniform(rng, 5, 60))
    return Catalog(sizes, profile)


def random_instance(rng: np.random.Generator, *, max_clusters: int = 4, max_chain: int = 3,
                    preplace: bool = True) -> SmallInstance:
    """A random graph, two-size catalog, chain request and (maybe) a few idle instances."""
    graph = random_graph(rng, max_clusters)
    alpha = _uniform(rng, 0.0, 1.0)
    uc = UseCase("Random", alpha, round(1.0 - alpha, 3) or 0.001, _uniform(rng, 1.0, 8.0))
    catalog = random_catalog(rng, uc.name)
    ids = graph.cluster_ids
    ingress = ids[int(rng.integers(len(ids)))]
    cands = sorted(npop_candidates(graph, ingress))
    egress = cands[int(rng.integers(len(cands)))] if rng.random() < 0.5 else None
    chain = [KINDS[int(rng.integers(len(KINDS)))]
             for _ in range(int(rng.integers(1, max_chain + 1)))]
    request = make_bfc_request(uc, chain, int(rng.integers(1, 11)), request_id=0,
                               ingress=ingress, egress=egress)
    state = ProvisioningState()
    if preplace:
        for _ in range(int(rng.integers(0, 3))):
            try:
                apply_place(state, graph, cands[int(rng.integers(len(cands)))],
                            KINDS[int(rng.integers(len(KINDS)))],
                            ("Small", "Large")[int(rng.integers(2))], catalog)
            except ChainStateError:
                pass
    return SmallInstance(graph, catalog, request, state)
