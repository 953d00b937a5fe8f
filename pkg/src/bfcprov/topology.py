"""Infrastructure graph: clusters (N-PoPs), directed policy links and candidacy."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping


class TopologyError(ValueError):
    pass


class DuplicateCluster(TopologyError):
    pass


class DanglingLink(TopologyError):
    pass


class SelfLink(TopologyError):
    pass


class UnknownCluster(TopologyError, KeyError):
    pass


class NoSuchLink(TopologyError, KeyError):
    pass


class Affiliation(str, Enum):
    HEALTHCARE = "HealthcareInstitution"
    RESEARCH = "ResearchCentre"
    REMOTE = "Remote"


@dataclass(frozen=True)
class Cluster:
    id: int
    cpu_capacity: float
    affiliation: Affiliation = Affiliation.HEALTHCARE

    def __post_init__(self):
        if self.id < 0:
            raise TopologyError(f"cluster id must be non-negative, got {self.id}")
        if not self.cpu_capacity > 0:
            raise TopologyError(f"cluster {self.id}: cpu_capacity must be positive")


@dataclass(frozen=True)
class Link:
    src: int
    dst: int
    delay: float = 0.0

    def __post_init__(self):
        if self.src == self.dst:
            raise SelfLink(f"self-link on cluster {self.src}")
        if self.delay < 0:
            raise TopologyError(f"link ({self.src},{self.dst}) has negative delay")


@dataclass(frozen=True)
class InfrastructureGraph:
    """Directed attributed graph of clusters and policy links.

    A missing link means the policy forbids steering traffic between the two
    clusters. Isolated clusters are allowed.
    """

    clusters: tuple[Cluster, ...]
    links: Mapping[tuple[int, int], Link] = field(default_factory=dict)

    @property
    def cluster_ids(self) -> tuple[int, ...]:
        return tuple(c.id for c in self.clusters)

    def cluster(self, cid: int) -> Cluster:
        for c in self.clusters:
            if c.id == cid:
                return c
        raise UnknownCluster(cid)

    def has_cluster(self, cid: int) -> bool:
        return any(c.id == cid for c in self.clusters)

    def has_link(self, src: int, dst: int) -> bool:
        return (src, dst) in self.links

    def routable(self, src: int, dst: int) -> bool:
        return src == dst or (src, dst) in self.links

    def without_link(self, src: int, dst: int) -> "InfrastructureGraph":
        links = {k: v for k, v in self.links.items() if k != (src, dst)}
        return InfrastructureGraph(self.clusters, links)


def build_infrastructure(clusters: Iterable[Cluster | Mapping],
                         links: Iterable[Link | Mapping | tuple] = ()) -> InfrastructureGraph:
    """Validate a cluster/link description and return the graph.

    Clusters may be given as ``Cluster`` objects or mappings with ``id``,
    ``cpu_capacity`` and optional ``affiliation``. Links may be ``Link``
    objects, mappings with ``from``/``to``/``delay`` or ``(src, dst, delay)``
    tuples.
    """
    cs = [_as_cluster(c) for c in clusters]
    if not cs:
        raise TopologyError("infrastructure needs at least one cluster")
    seen: set[int] = set()
    for c in cs:
        if c.id in seen:
            raise DuplicateCluster(c.id)
        seen.add(c.id)
    out: dict[tuple[int, int], Link] = {}
    for raw in links:
        link = _as_link(raw)
        for end in (link.src, link.dst):
            if end not in seen:
                raise DanglingLink(f"link ({link.src},{link.dst}) references unknown cluster {end}")
        if (link.src, link.dst) in out:
            raise TopologyError(f"duplicate link ({link.src},{link.dst})")
        out[(link.src, link.dst)] = link
    return InfrastructureGraph(tuple(sorted(cs, key=lambda c: c.id)), out)


def _as_cluster(c) -> Cluster:
    if isinstance(c, Cluster):
        return c
    aff = c.get("affiliation", Affiliation.HEALTHCARE)
    return Cluster(int(c["id"]), float(c["cpu_capacity"]), Affiliation(aff))


def _as_link(raw) -> Link:
    if isinstance(raw, Link):
        return raw
    if isinstance(raw, Mapping):
        return Link(int(raw["from"]), int(raw["to"]), float(raw.get("delay", 0.0)))
    src, dst, *rest = raw
    return Link(int(src), int(dst), float(rest[0]) if rest else 0.0)


def npop_candidates(graph: InfrastructureGraph, src: int) -> frozenset[int]:
    """Clusters eligible for placement when traffic sits on ``src``.

    The source itself always qualifies (centralised placement), plus every
    cluster it has an outgoing link to.
    """
    if not graph.has_cluster(src):
        raise UnknownCluster(src)
    return frozenset({src} | {j for (i, j) in graph.links if i == src})


def link_delay(graph: InfrastructureGraph, src: int, dst: int) -> float:
    """Delay of the directed link; zero for the same cluster."""
    for end in (src, dst):
        if not graph.has_cluster(end):
            raise UnknownCluster(end)
    if src == dst:
        return 0.0
    try:
        return graph.links[(src, dst)].delay
    except KeyError:
        raise NoSuchLink((src, dst)) from None
