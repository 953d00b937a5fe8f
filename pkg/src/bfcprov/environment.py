"""Tick-based simulation of chain provisioning under a client ramp.

One action per tick. Clients are grouped into long-lived sessions, each one a
chain request; when the ramp moves to the next level the existing sessions
are re-profiled (more clients on the same mapping) and new sessions arrive as
pending requests. Actual instance load is the profiled load perturbed by
per-tick bursts, so an instance can run above 100%.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .actions import DESTROY, MAP, NO_OP, NOOP, PLACE, Action
from .catalog import BfcRequest, Catalog, UseCase, make_bfc_request
from .chainstate import (EPS, InstanceId, ProvisioningState, RequestNotFullyMapped,
                         UnknownInstance, apply_destroy, apply_map, apply_move, apply_place,
                         available_cpu, check_constraints, instance_load, move_error,
                         node_demand, release_request, reprofile)
from .greedy import heuristic_suggest
from .topology import InfrastructureGraph, link_delay, npop_candidates


class InvalidScenario(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    name: str
    graph: InfrastructureGraph
    catalog: Catalog
    use_case: UseCase
    chain: tuple[str, ...]
    client_schedule: tuple[int, ...]
    ingress: int = 0
    egress: int | None = None
    ticks_per_level: int = 16
    session_size: int = 10
    max_sessions: int | None = None
    idle_timeout: int = 20
    burst_sigma: float = 0.15
    discovery_penalty: float = 0.4
    overload_exponent: float = 5.0
    max_slots: int = 4
    grace_ticks: int = 6
    invalid_penalty: float = 0.1
    seed: int = 0
    description: str = ""

    def __post_init__(self):
        if not self.client_schedule:
            raise InvalidScenario(f"{self.name}: empty client schedule")
        if any(c < 0 for c in self.client_schedule):
            raise InvalidScenario(f"{self.name}: negative client count in schedule")
        if self.burst_sigma < 0:
            raise InvalidScenario(f"{self.name}: burst_sigma must be >= 0")
        if not self.chain:
            raise InvalidScenario(f"{self.name}: empty chain")
        if self.ticks_per_level < 1 or self.session_size < 1 or self.max_slots < 1:
            raise InvalidScenario(f"{self.name}: ticks, session size and slots must be >= 1")
        for k in self.chain:
            if k not in self.catalog.sizes:
                raise InvalidScenario(f"{self.name}: chain kind {k} not in catalog")
        if not self.graph.has_cluster(self.ingress):
            raise InvalidScenario(f"{self.name}: ingress cluster {self.ingress} unknown")

    @property
    def candidates(self) -> frozenset[int]:
        return npop_candidates(self.graph, self.ingress)

    @property
    def baseline_latency(self) -> float:
        """Chain-free proxy path: a single service lookup, no functions in between."""
        return self.discovery_penalty

    @property
    def horizon(self) -> int:
        return len(self.client_schedule) * self.ticks_per_level

    def with_overrides(self, **kw) -> "Scenario":
        return replace(self, **kw)


def session_clients(scenario: Scenario, clients: int) -> list[int]:
    """Split ``clients`` evenly across sessions of nominal size ``session_size``."""
    if clients <= 0:
        return []
    n = math.ceil(clients / scenario.session_size)
    if scenario.max_sessions is not None:
        n = min(n, scenario.max_sessions)
    base, extra = divmod(clients, n)
    return [base + (1 if i < extra else 0) for i in range(n)]


def enumerate_actions(scenario: Scenario) -> list[Action]:
    """Fixed, ordered action space; NoOp is always last."""
    g, cat = scenario.graph, scenario.catalog
    kinds = list(dict.fromkeys(scenario.chain))
    acts: list[Action] = []
    for c in g.cluster_ids:
        for k in kinds:
            for s in cat.size_labels(k):
                acts.append(Action(PLACE, c, k, size=s))
    for c in g.cluster_ids:
        for q, k in enumerate(scenario.chain):
            for slot in range(scenario.max_slots):
                acts.append(Action(MAP, c, k, slot=slot, position=q))
    for c in g.cluster_ids:
        for k in kinds:
            for slot in range(scenario.max_slots):
                acts.append(Action(DESTROY, c, k, slot=slot))
    acts.append(NO_OP)
    return acts


def action_count(n_clusters: int, n_kinds: int, n_sizes: int, slots: int, chain_len: int) -> int:
    return n_clusters * (n_kinds * n_sizes + slots * chain_len + n_kinds * slots) + 1


@dataclass
class StepOutcome:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict = field(default_factory=dict)


@dataclass
class TickRecord:
    level: int
    clients: int
    pods: dict[tuple[int, str], int]
    utils: dict[tuple[int, str], list[float]]
    latencies: list[float]
    overheads: list[float]
    reward: float
    violations: int
    unserved: int = 0          # requests not fully mapped at this tick


class ProvisioningEnv:
    def __init__(self, scenario: Scenario, seed: int | None = None, record: bool = False,
                 check: bool = False):
        self.scenario = scenario
        self.actions = enumerate_actions(scenario)
        self.action_index = {a: i for i, a in enumerate(self.actions)}
        self.kinds = list(dict.fromkeys(scenario.chain))
        self.candidates = scenario.candidates
        self._largest = {k: max(v.cpu_capacity for v in scenario.catalog.sizes[k].values())
                         for k in self.kinds}
        self.record = record
        self.check = check
        self._obs_len = None
        self.reset(seed)

    # -- lifecycle -------------------------------------------------------
    def reset(self, seed: int | None = None) -> np.ndarray:
        sc = self.scenario
        self.seed = sc.seed if seed is None else seed
        self.rng = np.random.default_rng(self.seed)
        self.state = ProvisioningState()
        self.level = 0
        self.tick_in_level = 0
        self.done = False
        self.sessions: list[int] = []
        self.pending_since: dict[int, int] = {}
        self.actual: dict[InstanceId, float] = {}
        self.last_overhead = 0.0
        self.trace: list[TickRecord] = []
        self._next_request = 0
        self._apply_level()
        self._sample_usage()
        return self.observation()

    @property
    def clients(self) -> int:
        return self.scenario.client_schedule[min(self.level, len(self.scenario.client_schedule) - 1)]

    def _new_request(self, clients: int) -> BfcRequest:
        sc = self.scenario
        req = make_bfc_request(sc.use_case, sc.chain, max(clients, 1), request_id=self._next_request,
                               ingress=sc.ingress, egress=sc.egress)
        self._next_request += 1
        return req

    def _apply_level(self) -> None:
        shares = session_clients(self.scenario, self.clients)
        while len(self.sessions) > len(shares):
            rid = self.sessions.pop()
            release_request(self.state, rid)
            self.pending_since.pop(rid, None)
        for i, c in enumerate(shares):
            if i < len(self.sessions):
                reprofile(self.state, self.sessions[i], c)
            else:
                req = self._new_request(c)
                self.state.requests[req.id] = req
                self.sessions.append(req.id)
                self.pending_since[req.id] = self.state.clock

    # -- queries ---------------------------------------------------------
    def requests(self) -> list[BfcRequest]:
        return [self.state.requests[r] for r in self.sessions]

    def degraded_positions(self, req: BfcRequest) -> list[int]:
        out = []
        for n in req.chain:
            inst = self.state.mapping.get((req.id, n.position))
            if inst is not None:
                cap = self.state.placements[inst].size.cpu_capacity
                if instance_load(self.state, self.scenario.catalog, inst) > cap + 1e-9:
                    out.append(n.position)
        return out

    def pending_request(self) -> BfcRequest | None:
        for req in self.requests():
            if not self.state.is_fully_mapped(req.id):
                return req
        return None

    def focus(self) -> tuple[BfcRequest | None, list[int]]:
        """Request the Map verb acts on: first pending, else first overloaded one."""
        req = self.pending_request()
        if req is not None:
            return req, self.state.unmapped_positions(req)
        for req in self.requests():
            deg = self.degraded_positions(req)
            if deg:
                return req, deg
        return None, []

    def instance_at(self, cluster: int, kind: str, slot: int) -> InstanceId | None:
        insts = self.state.instances_on(cluster, kind)
        return insts[slot] if 0 <= slot < len(insts) else None

    def utilization(self, inst: InstanceId) -> float:
        return self.actual.get(inst, 0.0) / self.state.placements[inst].size.cpu_capacity

    # -- dynamics --------------------------------------------------------
    def actual_usage(self, inst: InstanceId) -> float:
        if inst not in self.state.placements:
            raise UnknownInstance(inst)
        return self.actual.get(inst, 0.0)

    def _sample_usage(self) -> None:
        sig = self.scenario.burst_sigma
        cat = self.scenario.catalog
        self.actual = {}
        for inst in sorted(self.state.placements):
            load = instance_load(self.state, cat, inst)
            if sig > 0:
                eps = min(max(float(self.rng.normal(0.0, sig)), -3 * sig), 3 * sig)
            else:
                eps = 0.0
            self.actual[inst] = load * (1.0 + eps)

    def overload_factor(self, utilization: float) -> float:
        if utilization <= 1.0:
            return 1.0
        return utilization ** self.scenario.overload_exponent

    def profiled_utilization(self, inst: InstanceId) -> float:
        load = instance_load(self.state, self.scenario.catalog, inst)
        return load / self.state.placements[inst].size.cpu_capacity

    def simulate_latency(self, req: BfcRequest, profiled: bool = False) -> float:
        """Round-trip latency of one request through its mapped chain.

        With ``profiled`` the overload factor uses profiled rather than sampled load.
        """
        util = self.profiled_utilization if profiled else self.utilization
        st, g = self.state, self.scenario.graph
        clusters = []
        proc = 0.0
        for n in req.chain:
            inst = st.mapping.get((req.id, n.position))
            if inst is None:
                raise RequestNotFullyMapped(req.id)
            p = st.placements[inst]
            clusters.append(p.cluster)
            proc += p.size.base_processing_delay * self.overload_factor(util(inst))
        links = 0.0
        hops = 0
        for a, b in zip(clusters, clusters[1:]):
            if a != b:
                links += link_delay(g, a, b)
                hops += 1
        return proc + links + self.scenario.discovery_penalty * (1 + hops)

    def compute_reward(self) -> tuple[float, dict]:
        sc = self.scenario
        uc = sc.use_case
        cap = waste = unmet = 0.0
        for inst, p in self.state.placements.items():
            c = p.size.cpu_capacity
            used = self.actual.get(inst, 0.0)
            cap += c
            waste += max(0.0, c - used)
            # load above capacity is demand no provisioned capacity covers
            unmet += max(0.0, used - c)
        for req in self.requests():
            for q in self.state.unmapped_positions(req):
                unmet += node_demand(sc.catalog, req, q)
        denom = cap + unmet
        r_res = -(waste + unmet) / denom if denom > 0 else 0.0
        overheads = []
        latencies = []
        late = False
        for req in self.requests():
            if self.state.is_fully_mapped(req.id):
                lat = self.simulate_latency(req)
                latencies.append(lat)
                overheads.append(max(0.0, lat - sc.baseline_latency))
            elif self.state.clock - self.pending_since.get(req.id, self.state.clock) >= sc.grace_ticks:
                late = True
        mean_over = float(np.mean(overheads)) if overheads else 0.0
        r_perf = -min(1.0, mean_over / uc.delay_bound) - (1.0 if late else 0.0)
        reward = uc.alpha * r_res + uc.beta * r_perf
        info = {"r_res": r_res, "r_perf": r_perf, "latencies": latencies,
                "overheads": overheads, "mean_overhead": mean_over}
        return reward, info

    def reward_floor(self) -> float:
        uc = self.scenario.use_case
        return -(uc.alpha + uc.beta) - uc.beta

    def reap_idle(self) -> list[InstanceId]:
        T = self.scenario.idle_timeout
        gone = []
        for inst, p in list(self.state.placements.items()):
            if not self.state.served.get(inst) and self.state.clock - p.last_active_at >= T:
                apply_destroy(self.state, inst)
                gone.append(inst)
        return gone

    def rejection(self, action: Action, focus=None) -> str | None:
        """Why ``action`` would be rejected right now, or None if it is accepted."""
        sc, st = self.scenario, self.state
        if action.verb == NOOP:
            return None
        if action.cluster not in self.candidates:
            return "PolicyViolation"
        if action.verb == PLACE:
            if len(st.instances_on(action.cluster, action.kind)) >= sc.max_slots:
                return "SlotsExhausted"
            cfg = sc.catalog.sizes[action.kind][action.size]
            if available_cpu(st, sc.graph, action.cluster) + EPS < cfg.cpu_capacity:
                return "InsufficientClusterCpu"
            return None
        if action.verb == DESTROY:
            inst = self.instance_at(action.cluster, action.kind, action.slot)
            if inst is None:
                return "UnknownInstance"
            return "InstanceBusy" if st.served.get(inst) else None
        if action.verb == MAP:
            req, positions = self.focus() if focus is None else focus
            if req is None:
                return "NothingToMap"
            inst = self.instance_at(action.cluster, action.kind, action.slot)
            if inst is None:
                return "UnknownInstance"
            if action.position not in positions:
                return "AlreadyMapped"
            err = move_error(st, sc.graph, sc.catalog, inst, req, action.position)
            return None if err is None else type(err).__name__
        return "UnknownVerb"

    def valid_mask(self) -> np.ndarray:
        """Boolean vector over the action space: True where the action would be accepted.

        Agrees with :meth:`rejection` action by action, computed in one pass.
        """
        sc, st = self.scenario, self.state
        insts = {(c, k): st.instances_on(c, k) for c in self.candidates for k in self.kinds}
        free = {c: available_cpu(st, sc.graph, c) for c in self.candidates}
        req, positions = self.focus()
        mask = np.zeros(len(self.actions), dtype=bool)
        mask[-1] = True
        for i, a in enumerate(self.actions[:-1]):
            if a.cluster not in self.candidates:
                continue
            here = insts[(a.cluster, a.kind)]
            if a.verb == PLACE:
                mask[i] = (len(here) < sc.max_slots and free[a.cluster] + EPS
                           >= sc.catalog.sizes[a.kind][a.size].cpu_capacity)
            elif a.verb == DESTROY:
                mask[i] = a.slot < len(here) and not st.served.get(here[a.slot])
            elif req is not None and a.slot < len(here) and a.position in positions:
                mask[i] = move_error(st, sc.graph, sc.catalog, here[a.slot], req,
                                     a.position) is None
        return mask

    def _apply(self, action: Action) -> str | None:
        """Apply ``action``; return an error tag when it is rejected."""
        error = self.rejection(action)
        if error is not None or action.verb == NOOP:
            return error
        sc, st = self.scenario, self.state
        if action.verb == PLACE:
            apply_place(st, sc.graph, action.cluster, action.kind, action.size, sc.catalog)
        elif action.verb == DESTROY:
            inst = self.instance_at(action.cluster, action.kind, action.slot)
            apply_destroy(st, inst)
            self.actual.pop(inst, None)
        else:
            req, _ = self.focus()
            inst = self.instance_at(action.cluster, action.kind, action.slot)
            q = action.position
            if (req.id, q) in st.mapping:
                apply_move(st, sc.graph, sc.catalog, inst, req, q)
            else:
                apply_map(st, sc.graph, sc.catalog, inst, req, q)
            if st.is_fully_mapped(req.id):
                self.pending_since.pop(req.id, None)
        return None

    def step(self, action: Action | int) -> StepOutcome:
        if self.done:
            raise RuntimeError("episode finished; call reset()")
        if isinstance(action, (int, np.integer)):
            action = self.actions[int(action)]
        error = self._apply(action)
        self._sample_usage()
        reward, info = self.compute_reward()
        if error is not None:
            reward -= self.scenario.invalid_penalty
        reward = max(reward, self.reward_floor())
        self.last_overhead = info["mean_overhead"]
        violations = None
        if self.check:
            violations = check_constraints(self.state, self.scenario.graph, self.scenario.catalog)
            info["violations"] = violations
        if self.record:
            self._record(reward, info, violations)
        info["error"] = error
        info["action"] = action
        # advance time
        self.state.clock += 1
        self.tick_in_level += 1
        if self.tick_in_level >= self.scenario.ticks_per_level:
            self.tick_in_level = 0
            self.level += 1
            if self.level >= len(self.scenario.client_schedule):
                self.done = True
            else:
                self._apply_level()
        info["reaped"] = self.reap_idle()
        for inst in info["reaped"]:
            self.actual.pop(inst, None)
        return StepOutcome(self.observation(), float(reward), self.done, info)

    def _record(self, reward: float, info: dict, violations) -> None:
        pods: dict[tuple[int, str], int] = {}
        utils: dict[tuple[int, str], list[float]] = {}
        for inst, p in self.state.placements.items():
            key = (p.cluster, inst.kind)
            pods[key] = pods.get(key, 0) + 1
            utils.setdefault(key, []).append(self.utilization(inst))
        self.trace.append(TickRecord(self.level, self.clients, pods, utils,
                                     list(info["latencies"]), list(info["overheads"]), reward,
                                     len(violations) if violations is not None else 0,
                                     len(self.sessions) - len(info["overheads"])))

    # -- observation -----------------------------------------------------
    def observation(self) -> np.ndarray:
        sc, st = self.scenario, self.state
        cids = sc.graph.cluster_ids
        feats: list[float] = []
        # profiled rather than sampled load: bursts are i.i.d. noise the agent cannot act on
        for c in cids:
            cap = used = 0.0
            for inst, p in st.placements.items():
                if p.cluster == c:
                    cap += p.size.cpu_capacity
                    used += instance_load(st, sc.catalog, inst)
            feats.append(min(used / cap, 2.0) if cap else 0.0)
        req, positions = self.focus()
        for c in cids:
            for k in self.kinds:
                insts = st.instances_on(c, k)
                feats.append(len(insts) / sc.max_slots)
                # hottest instance and share of the largest size: what a scale-up needs to see
                feats.append(min(max((self.profiled_utilization(i) for i in insts), default=0.0),
                                 2.0))
                feats.append(sum(st.placements[i].size.cpu_capacity >= self._largest[k]
                                 for i in insts) / sc.max_slots)
                feats.append(1.0 if any(not st.served.get(i) for i in insts) else 0.0)
                fits = 0.0
                if req is not None:
                    for q in positions:
                        if sc.chain[q] == k and any(
                                _fits(self, i, req, q) for i in insts):
                            fits = 1.0
                feats.append(fits)
        for q, k in enumerate(sc.chain):
            feats.append(1.0 if q in positions else 0.0)
            here = None
            if req is not None and (req.id, q) in st.mapping:
                here = st.placements[st.mapping[(req.id, q)]].cluster
            for c in cids:
                feats.append(1.0 if here == c else 0.0)
        over = [self.simulate_latency(r, profiled=True) - sc.baseline_latency
                for r in self.requests() if st.is_fully_mapped(r.id)]
        feats.append(min(float(np.mean(over)) / sc.use_case.delay_bound, 2.0) if over else 0.0)
        feats.append(self.clients / max(max(sc.client_schedule), 1))
        return np.asarray(feats, dtype=np.float64)

    # -- heuristic hook --------------------------------------------------
    def heuristic_action(self) -> Action:
        sc = self.scenario
        return heuristic_suggest(sc.graph, self.state, sc.catalog, self.pending_request(),
                                 idle_timeout=sc.idle_timeout, candidates=sc.candidates,
                                 max_slots=sc.max_slots)


def _fits(env: ProvisioningEnv, inst: InstanceId, req: BfcRequest, q: int) -> bool:
    return move_error(env.state, env.scenario.graph, env.scenario.catalog, inst, req, q) is None


def reset(scenario: Scenario, seed: int | None = None, **kw) -> tuple[ProvisioningEnv, np.ndarray]:
    env = ProvisioningEnv(scenario, seed, **kw)
    return env, env.observation()
