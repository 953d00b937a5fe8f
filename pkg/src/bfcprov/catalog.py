"""Microservice kinds, instance sizes, use cases, demand profiles and chain requests."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

FIREWALL = "F"
ENCRYPTION = "T"

SMALL = "Small"
LARGE = "Large"
SIZE_ORDER = (SMALL, LARGE)


class CatalogError(ValueError):
    pass


class UnknownKind(CatalogError, KeyError):
    pass


class UnknownSize(CatalogError, KeyError):
    pass


class MissingProfileEntry(CatalogError, KeyError):
    pass


class EmptyChain(CatalogError):
    pass


@dataclass(frozen=True)
class InstanceSize:
    label: str
    cpu_capacity: float
    base_processing_delay: float

    def __post_init__(self):
        if not self.cpu_capacity > 0:
            raise CatalogError(f"{self.label}: cpu_capacity must be positive")
        if self.base_processing_delay < 0:
            raise CatalogError(f"{self.label}: negative processing delay")


@dataclass(frozen=True)
class UseCase:
    name: str
    alpha: float
    beta: float
    delay_bound: float
    send_rate_kbps: tuple[float, float] = (100.0, 200.0)

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or not (self.alpha + self.beta) > 0:
            raise CatalogError(f"{self.name}: alpha/beta must be non-negative with positive sum")
        lo, hi = self.send_rate_kbps
        if lo > hi:
            raise CatalogError(f"{self.name}: empty send-rate range")
        if not self.delay_bound > 0:
            raise CatalogError(f"{self.name}: delay bound must be positive")

    @property
    def resource_first(self) -> bool:
        return self.alpha > self.beta


@dataclass(frozen=True)
class ProfileEntry:
    baseline_load: float
    per_client_load: float

    def __post_init__(self):
        if self.baseline_load < 0 or self.per_client_load < 0:
            raise CatalogError("profile loads must be non-negative")


# (kind, use-case name) -> entry
DemandProfile = Mapping[tuple[str, str], ProfileEntry]


@dataclass(frozen=True)
class Catalog:
    """Registered kinds and their instance configurations, largest last."""

    sizes: Mapping[str, Mapping[str, InstanceSize]]
    profile: DemandProfile = field(default_factory=dict)

    def __post_init__(self):
        for kind, by_size in self.sizes.items():
            caps = [by_size[s].cpu_capacity for s in SIZE_ORDER if s in by_size]
            if caps != sorted(caps):
                raise CatalogError(f"{kind}: larger sizes must have larger capacity")

    @property
    def kinds(self) -> tuple[str, ...]:
        return tuple(self.sizes)

    def size_labels(self, kind: str) -> tuple[str, ...]:
        if kind not in self.sizes:
            raise UnknownKind(kind)
        return tuple(s for s in SIZE_ORDER if s in self.sizes[kind]) + tuple(
            s for s in self.sizes[kind] if s not in SIZE_ORDER)

    def all_size_labels(self) -> tuple[str, ...]:
        labels: list[str] = []
        for kind in self.sizes:
            for s in self.size_labels(kind):
                if s not in labels:
                    labels.append(s)
        return tuple(labels)

    def with_profile(self, profile: DemandProfile) -> "Catalog":
        return replace(self, profile=dict(profile))


def instance_config(catalog: Catalog, kind: str, size: str) -> InstanceSize:
    if kind not in catalog.sizes:
        raise UnknownKind(kind)
    try:
        return catalog.sizes[kind][size]
    except KeyError:
        raise UnknownSize(f"{kind}/{size}") from None


def profiled_demand(profile: DemandProfile, kind: str, use_case: UseCase | str,
                    clients: float) -> float:
    """Planner-visible CPU demand of one chain node: baseline + clients * per-client."""
    name = use_case.name if isinstance(use_case, UseCase) else use_case
    if clients < 0:
        raise CatalogError("client count must be non-negative")
    try:
        entry = profile[(kind, name)]
    except KeyError:
        raise MissingProfileEntry((kind, name)) from None
    return entry.baseline_load + clients * entry.per_client_load


@dataclass(frozen=True)
class ChainNode:
    position: int
    kind: str


@dataclass(frozen=True)
class BfcRequest:
    """A line-path chain request.

    ``ingress``/``egress`` are the clusters where traffic enters and leaves;
    they anchor the placement scan and bound the policy candidate set.
    """

    id: int
    use_case: UseCase
    chain: tuple[ChainNode, ...]
    client_count: int
    ingress: int = 0
    egress: int | None = None

    def __post_init__(self):
        if not self.chain:
            raise EmptyChain(f"request {self.id} has no chain nodes")
        if self.client_count < 0:
            raise CatalogError("client count must be non-negative")

    @property
    def delay_bound(self) -> float:
        return self.use_case.delay_bound

    @property
    def kinds(self) -> tuple[str, ...]:
        return tuple(n.kind for n in self.chain)

    @property
    def virtual_links(self) -> tuple[tuple[int, int], ...]:
        return tuple((q, q + 1) for q in range(len(self.chain) - 1))

    def anchor(self, position: int) -> int:
        """Cluster scanned first for ``position``: egress for the tail, ingress otherwise."""
        if self.egress is not None and position == len(self.chain) - 1 and position > 0:
            return self.egress
        return self.ingress

    def with_clients(self, clients: int) -> "BfcRequest":
        return replace(self, client_count=clients)


def make_bfc_request(use_case: UseCase, kinds: Sequence[str], clients: int, *,
                     request_id: int = 0, ingress: int = 0,
                     egress: int | None = None) -> BfcRequest:
    if not kinds:
        raise EmptyChain("chain needs at least one microservice")
    if clients < 1:
        raise CatalogError("a request needs at least one client")
    chain = tuple(ChainNode(q, k) for q, k in enumerate(kinds))
    return BfcRequest(request_id, use_case, chain, clients, ingress, egress)
