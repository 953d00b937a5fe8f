"""Discrete provisioning actions shared by the heuristic, the environment and the agents."""
from __future__ import annotations

from typing import NamedTuple

PLACE = "Place"
MAP = "Map"
DESTROY = "Destroy"
NOOP = "NoOp"


class Action(NamedTuple):
    verb: str
    cluster: int = -1
    kind: str = ""
    size: str = ""
    slot: int = -1
    position: int = -1

    def __str__(self):
        if self.verb == PLACE:
            return f"Place(c{self.cluster},{self.kind},{self.size})"
        if self.verb == MAP:
            return f"Map(c{self.cluster},{self.kind}#{self.slot}->q{self.position})"
        if self.verb == DESTROY:
            return f"Destroy(c{self.cluster},{self.kind}#{self.slot})"
        return "NoOp"


def place(cluster: int, kind: str, size: str) -> Action:
    return Action(PLACE, cluster, kind, size=size)


def map_to(cluster: int, kind: str, slot: int, position: int) -> Action:
    return Action(MAP, cluster, kind, slot=slot, position=position)


def destroy(cluster: int, kind: str, slot: int) -> Action:
    return Action(DESTROY, cluster, kind, slot=slot)


NO_OP = Action(NOOP)
