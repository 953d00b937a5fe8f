"""Q-learning agents: plain ε-greedy DQL and the heuristic-boosted HDQL variant.

Both learn a Q-function over the environment's fixed action space. Exploration
follows the convention "exploit when q <= p", so ``p`` is the probability of
taking the greedy action, and it anneals upward during training.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Protocol, Sequence

import numpy as np

from .actions import Action
from .environment import ProvisioningEnv, Scenario

__all__ = [
    "Action", "AgentConfig", "EmptyBatch", "EvalMetrics", "MLPQFunction", "QFunction",
    "TabularQFunction", "TrainResult", "Transition", "evaluate", "exploit_probability",
    "heuristic_bonus", "make_q_function", "select_action", "select_action_hdql", "td_update",
    "train",
]

DQL = "dql"
HDQL = "hdql"


class EmptyBatch(ValueError):
    pass


class Transition(NamedTuple):
    obs: np.ndarray
    action: int
    reward: float
    next_obs: np.ndarray
    done: bool
    next_mask: np.ndarray | None = None


class QFunction(Protocol):
    n_actions: int

    def values(self, obs: np.ndarray) -> np.ndarray: ...

    def fit(self, obs: np.ndarray, actions: np.ndarray, targets: np.ndarray) -> np.ndarray:
        """Move Q(obs, actions) toward targets; return the predictions before the move."""
        ...

    def batch_values(self, obs: np.ndarray) -> np.ndarray: ...

    def clone(self) -> "QFunction": ...


class TabularQFunction:
    """Table over a discretised observation; unseen states read as ``init``."""

    def __init__(self, n_actions: int, *, bins: int = 4, learning_rate: float = 0.2,
                 init: float = 0.0):
        self.n_actions = n_actions
        self.bins = bins
        self.learning_rate = learning_rate
        self.init = init
        self.table: dict[bytes, np.ndarray] = {}

    def key(self, obs: np.ndarray) -> bytes:
        return np.floor(np.asarray(obs) * self.bins + 1e-9).astype(np.int16).tobytes()

    def values(self, obs: np.ndarray) -> np.ndarray:
        row = self.table.get(self.key(obs))
        if row is None:
            return np.full(self.n_actions, self.init, dtype=np.float64)
        return row.copy()

    def set_values(self, obs: np.ndarray, values: Iterable[float]) -> None:
        self.table[self.key(obs)] = np.asarray(values, dtype=np.float64).copy()

    def batch_values(self, obs: np.ndarray) -> np.ndarray:
        return np.stack([self.values(o) for o in obs])

    def fit(self, obs, actions, targets) -> np.ndarray:
        before = np.empty(len(actions))
        for i, (o, a, t) in enumerate(zip(obs, actions, targets)):
            k = self.key(o)
            row = self.table.get(k)
            if row is None:
                row = self.table[k] = np.full(self.n_actions, self.init, dtype=np.float64)
            before[i] = row[a]
            row[a] += self.learning_rate * (t - row[a])
        return before

    def clone(self) -> "TabularQFunction":
        other = copy.copy(self)
        other.table = {k: v.copy() for k, v in self.table.items()}
        return other


class MLPQFunction:
    """Two-hidden-layer ReLU network trained with Adam on squared TD error.

    All weights live in one flat vector so the optimiser works on a single array.
    """

    def __init__(self, obs_dim: int, n_actions: int, *, hidden: Sequence[int] = (64, 64),
                 learning_rate: float = 1e-3, seed: int = 0):
        self.n_actions = n_actions
        self.learning_rate = learning_rate
        rng = np.random.default_rng(seed)
        dims = [obs_dim, *hidden, n_actions]
        shapes = []
        for a, b in zip(dims, dims[1:]):
            shapes += [(a, b), (b,)]
        self.params = np.zeros(sum(int(np.prod(sh)) for sh in shapes))
        self._bind(shapes)
        for i, w in enumerate(self.weights):
            w[...] = rng.normal(0.0, np.sqrt(2.0 / w.shape[0]), size=w.shape)
        # small output layer keeps initial Q-values near zero
        self.weights[-1] *= 0.1
        self._m = np.zeros_like(self.params)
        self._v = np.zeros_like(self.params)
        self._t = 0

    def _bind(self, shapes) -> None:
        self._shapes = shapes
        views, at = [], 0
        for sh in shapes:
            n = int(np.prod(sh))
            views.append(self.params[at:at + n].reshape(sh))
            at += n
        self.weights = views[0::2]
        self.biases = views[1::2]

    def _forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        acts = [x]
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            x = np.maximum(x @ w + b, 0.0)
            acts.append(x)
        return x @ self.weights[-1] + self.biases[-1], acts

    def values(self, obs: np.ndarray) -> np.ndarray:
        out, _ = self._forward(np.asarray(obs, dtype=np.float64)[None, :])
        return out[0]

    def batch_values(self, obs: np.ndarray) -> np.ndarray:
        return self._forward(np.asarray(obs, dtype=np.float64))[0]

    def fit(self, obs, actions, targets) -> np.ndarray:
        x = np.asarray(obs, dtype=np.float64)
        a = np.asarray(actions)
        out, acts = self._forward(x)
        n = len(a)
        rows = np.arange(n)
        before = out[rows, a].copy()
        g = np.zeros_like(out)
        g[rows, a] = 2.0 * (before - np.asarray(targets)) / n
        grads: list[np.ndarray] = []
        for i in range(len(self.weights) - 1, -1, -1):
            grads.append(g.sum(axis=0))
            grads.append((acts[i].T @ g).ravel())
            if i > 0:
                g = (g @ self.weights[i].T) * (acts[i] > 0)
        self._adam(np.concatenate(grads[::-1]))
        return before

    def _adam(self, grad: np.ndarray, b1: float = 0.9, b2: float = 0.999,
              eps: float = 1e-8) -> None:
        self._t += 1
        self._m *= b1
        self._m += (1 - b1) * grad
        self._v *= b2
        self._v += (1 - b2) * grad * grad
        lr = self.learning_rate * np.sqrt(1 - b2 ** self._t) / (1 - b1 ** self._t)
        self.params -= lr * self._m / (np.sqrt(self._v) + eps)

    def clone(self) -> "MLPQFunction":
        other = copy.copy(self)
        other.params = self.params.copy()
        other._m = self._m.copy()
        other._v = self._v.copy()
        other._bind(self._shapes)
        return other


@dataclass(frozen=True)
class AgentConfig:
    p_start: float = 0.1
    p_end: float = 0.95
    anneal_fraction: float = 0.5
    gamma: float = 0.95
    replay_capacity: int = 20_000
    batch_size: int = 32
    target_refresh: int = 500
    learning_rate: float | None = None     # None: 1e-3 for the MLP, 0.2 for the table
    q_init: float = 0.0
    hdql_eta: float = 0.01
    hdql_guidance: float = 0.3      # share of episodes whose exploit step is heuristic-lifted
    q_function: str = "mlp"
    bins: int = 4
    hidden: tuple[int, ...] = (64, 64)
    updates_per_step: int = 1
    train_every: int = 2
    mask_invalid: bool = True

    def __post_init__(self):
        for name in ("p_start", "p_end", "anneal_fraction", "hdql_guidance"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        if self.hdql_eta <= 0:
            raise ValueError("hdql_eta must be positive")
        if min(self.replay_capacity, self.batch_size, self.target_refresh, self.bins,
               self.updates_per_step, self.train_every) < 1:
            raise ValueError("replay capacity, batch size, target refresh, bins, updates per "
                             "step and train_every must be >= 1")
        if self.learning_rate is not None and self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.q_function not in ("tabular", "mlp"):
            raise ValueError(f"unknown q_function {self.q_function!r}")


def make_q_function(config: AgentConfig, obs_dim: int, n_actions: int, seed: int = 0) -> QFunction:
    if config.q_function == "mlp":
        return MLPQFunction(obs_dim, n_actions, hidden=config.hidden,
                            learning_rate=config.learning_rate or 1e-3, seed=seed)
    return TabularQFunction(n_actions, bins=config.bins, learning_rate=config.learning_rate or 0.2,
                            init=config.q_init)


def exploit_probability(config: AgentConfig, episode: int, episodes: int) -> float:
    span = config.anneal_fraction * episodes
    if span <= 0:
        return config.p_end
    frac = min(1.0, episode / span)
    return config.p_start + (config.p_end - config.p_start) * frac


def _greedy_index(values: np.ndarray, mask: np.ndarray | None = None) -> int:
    # np.argmax returns the first maximum, i.e. the lowest index on ties
    if mask is not None:
        values = np.where(mask, values, -np.inf)
    return int(np.argmax(values))


def _random_index(n: int, mask: np.ndarray | None, rng: np.random.Generator) -> int:
    if mask is None:
        return int(rng.integers(n))
    allowed = np.flatnonzero(mask)
    return int(allowed[rng.integers(len(allowed))])


def select_action(qf: QFunction, obs: np.ndarray, p: float, rng: np.random.Generator,
                  mask: np.ndarray | None = None) -> int:
    """Index of the ε-greedy action: greedy when q <= p, uniform otherwise.

    ``mask`` optionally restricts both branches to the actions marked True.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    q = rng.random()
    if q <= p and p > 0.0:
        return _greedy_index(qf.values(obs), mask)
    return _random_index(qf.n_actions, mask, rng)


def heuristic_bonus(values: np.ndarray, heuristic: int, eta: float) -> np.ndarray:
    """H(s, ·): zero except at the heuristic action, lifted to eta above the max."""
    h = np.zeros_like(values, dtype=np.float64)
    h[heuristic] = max(0.0, float(values.max()) - float(values[heuristic]) + eta)
    return h


def select_action_hdql(qf: QFunction, obs: np.ndarray, heuristic: int, p: float,
                       config: AgentConfig, rng: np.random.Generator,
                       mask: np.ndarray | None = None) -> int:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    if not 0 <= heuristic < qf.n_actions:
        raise IndexError(f"heuristic action {heuristic} outside the action space")
    q = rng.random()
    if q <= p and p > 0.0:
        values = qf.values(obs)
        if mask is not None:
            values = np.where(mask, values, -np.inf)
        return _greedy_index(values + heuristic_bonus(values, heuristic, config.hdql_eta), mask)
    return _random_index(qf.n_actions, mask, rng)


def td_step(qf: QFunction, target: QFunction, obs: np.ndarray, actions: np.ndarray,
            rewards: np.ndarray, next_obs: np.ndarray, done: np.ndarray,
            next_mask: np.ndarray | None, gamma: float) -> float:
    """Array form of :func:`td_update`; ``next_mask`` rows with no True entry are ignored."""
    nq = target.batch_values(next_obs)
    if next_mask is not None:
        usable = next_mask.any(axis=1, keepdims=True)
        nq = np.where(next_mask | ~usable, nq, -np.inf)
    targets = rewards + np.where(done, 0.0, gamma * nq.max(axis=1))
    before = qf.fit(obs, actions, targets)
    return float(np.mean((targets - before) ** 2))


def td_update(qf: QFunction, batch: Sequence[Transition], gamma: float,
              target: QFunction | None = None) -> float:
    """One TD step toward r + gamma * max Q_target(s'); returns the pre-update MSE."""
    if len(batch) == 0:
        raise EmptyBatch("td_update needs at least one transition")
    masks = None
    if any(t.next_mask is not None for t in batch):
        n = qf.n_actions
        masks = np.stack([t.next_mask if t.next_mask is not None else np.zeros(n, bool)
                          for t in batch])
    return td_step(qf, qf if target is None else target,
                   np.stack([t.obs for t in batch]), np.array([int(t.action) for t in batch]),
                   np.array([t.reward for t in batch], dtype=np.float64),
                   np.stack([t.next_obs for t in batch]),
                   np.array([t.done for t in batch], dtype=bool), masks, gamma)


class ReplayBuffer:
    """Fixed-capacity ring of transitions kept as parallel arrays."""

    def __init__(self, capacity: int, obs_dim: int, n_actions: int):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.next_obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.done = np.zeros(capacity, dtype=bool)
        self.next_mask = np.zeros((capacity, n_actions), dtype=bool)
        self.size = 0
        self._i = 0

    def __len__(self) -> int:
        return self.size

    def add(self, t: Transition) -> None:
        i = self._i
        self.obs[i], self.actions[i], self.rewards[i] = t.obs, t.action, t.reward
        self.next_obs[i], self.done[i] = t.next_obs, t.done
        self.next_mask[i] = False if t.next_mask is None else t.next_mask
        self._i = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng: np.random.Generator, n: int) -> tuple:
        idx = rng.integers(self.size, size=n)
        return (self.obs[idx], self.actions[idx], self.rewards[idx], self.next_obs[idx],
                self.done[idx], self.next_mask[idx])


@dataclass
class TrainResult:
    q_function: QFunction
    curve: list[float]
    mode: str
    episodes: int
    losses: list[float] = field(default_factory=list)


def train(env_factory: Callable[[], ProvisioningEnv], mode: str, config: AgentConfig,
          episodes: int, seed: int = 0) -> TrainResult:
    """Train a Q-function; episode ``e`` resets the environment with seed ``seed * 100003 + e``."""
    mode = mode.lower()
    if mode not in (DQL, HDQL):
        raise ValueError(f"mode must be 'dql' or 'hdql', got {mode!r}")
    if episodes < 1:
        raise ValueError("training needs episodes >= 1")
    env = env_factory()
    rng = np.random.default_rng(seed)
    obs = env.reset(seed * 100_003)
    qf = make_q_function(config, len(obs), len(env.actions), seed)
    target = qf.clone()
    replay = ReplayBuffer(config.replay_capacity, len(obs), len(env.actions))
    curve: list[float] = []
    losses: list[float] = []
    steps = 0
    for ep in range(episodes):
        obs = env.reset(seed * 100_003 + ep)
        p = exploit_probability(config, ep, episodes)
        guided = mode == HDQL and ep < config.hdql_guidance * episodes
        total = 0.0
        mask = env.valid_mask() if config.mask_invalid else None
        while not env.done:
            if guided:
                h = env.action_index[env.heuristic_action()]
                a = select_action_hdql(qf, obs, h, p, config, rng, mask)
            else:
                a = select_action(qf, obs, p, rng, mask)
            out = env.step(a)
            mask = env.valid_mask() if config.mask_invalid and not out.done else None
            replay.add(Transition(obs, a, out.reward, out.observation, out.done, mask))
            total += out.reward
            obs = out.observation
            steps += 1
            if len(replay) >= config.batch_size and steps % config.train_every == 0:
                for _ in range(config.updates_per_step):
                    batch = replay.sample(rng, config.batch_size)
                    losses.append(td_step(qf, target, *batch, config.gamma))
            if steps % config.target_refresh == 0:
                target = qf.clone()
        curve.append(total)
    return TrainResult(qf, curve, mode, episodes, losses)


# -- evaluation ----------------------------------------------------------

Policy = Callable[[ProvisioningEnv, np.ndarray], int]


def trained_policy(result: TrainResult, config: AgentConfig) -> Policy:
    """Exploit policy of a trained agent.

    HDQL keeps the heuristic lift only when guidance lasted the whole run;
    otherwise the guidance has already been handed over to the Q-function.
    """
    if result.mode == HDQL and config.hdql_guidance >= 1.0:
        return hdql_policy(result.q_function, config.hdql_eta)
    return q_policy(result.q_function)


def q_policy(qf: QFunction, masked: bool = True) -> Policy:
    def act(env: ProvisioningEnv, obs: np.ndarray) -> int:
        return _greedy_index(qf.values(obs), env.valid_mask() if masked else None)
    return act


def hdql_policy(qf: QFunction, eta: float = 0.01, masked: bool = True) -> Policy:
    def act(env: ProvisioningEnv, obs: np.ndarray) -> int:
        mask = env.valid_mask() if masked else None
        values = qf.values(obs)
        if mask is not None:
            values = np.where(mask, values, -np.inf)
        h = env.action_index[env.heuristic_action()]
        return _greedy_index(values + heuristic_bonus(values, h, eta), mask)
    return act


def heuristic_policy(env: ProvisioningEnv, obs: np.ndarray) -> int:
    return env.action_index[env.heuristic_action()]


@dataclass
class LevelStats:
    seed: int
    level: int
    clients: int
    pods: dict[tuple[int, str], int]
    utils: dict[tuple[int, str], float]
    latency: float
    overhead: float
    samples: dict[tuple[int, str], int] = field(default_factory=dict)


@dataclass
class EvalMetrics:
    levels: list[LevelStats]
    total_reward: list[float]
    violations: int
    placements: int

    def _per_level(self, fn) -> dict[int, float]:
        out: dict[int, list[float]] = {}
        for row in self.levels:
            v = fn(row)
            if v is not None:
                out.setdefault(row.clients, []).append(v)
        return {k: float(np.median(v)) for k, v in out.items()}

    def overhead_by_level(self) -> dict[int, float]:
        """Median across seeds of the per-seed mean overhead at each client level."""
        return self._per_level(lambda r: r.overhead)

    def utilization_by_level(self, kind: str | None = None) -> dict[int, float]:
        def util(row: LevelStats):
            # mean over every (instance, tick) sample in the settled window
            vals = [(u, row.samples.get(k, 0)) for k, u in row.utils.items()
                    if (kind is None or k[1] == kind) and row.samples.get(k)]
            if not vals:
                return None
            w = sum(n for _, n in vals)
            return sum(u * n for u, n in vals) / w
        return self._per_level(util)

    @property
    def mean_overhead(self) -> float:
        """Mean over client levels of the per-level medians, like ``mean_utilization``."""
        vals = list(self.overhead_by_level().values())
        return float(np.mean(vals)) if vals else 0.0

    @property
    def mean_utilization(self) -> float:
        vals = list(self.utilization_by_level().values())
        return float(np.mean(vals)) if vals else 0.0


def rollout(env: ProvisioningEnv, policy: Policy, seed: int,
            settle_fraction: float = 0.5) -> tuple[list[LevelStats], float, int, int]:
    """Run one episode; per-level stats average the settled tail of each level."""
    obs = env.reset(seed)
    env.record = True
    env.check = True
    total = 0.0
    placements = 0
    while not env.done:
        a = policy(env, obs)
        before = set(env.state.placements)
        out = env.step(a)
        placements += len(set(env.state.placements) - before)
        total += out.reward
        obs = out.observation
    sc = env.scenario
    skip = int(sc.ticks_per_level * settle_fraction)
    rows: list[LevelStats] = []
    violations = sum(t.violations for t in env.trace)
    for level, clients in enumerate(sc.client_schedule):
        ticks = env.trace[level * sc.ticks_per_level:(level + 1) * sc.ticks_per_level][skip:]
        if not ticks:
            continue
        keys = sorted({k for t in ticks for k in t.pods})
        # pods as deployed at the end of the level; utilization over the settled tail
        pods = {k: ticks[-1].pods.get(k, 0) for k in keys}
        utils = {}
        counts = {}
        for k in keys:
            samples = [u for t in ticks for u in t.utils.get(k, [])]
            utils[k] = float(np.mean(samples)) if samples else 0.0
            counts[k] = len(samples)
        # an unserved request is a missed deadline: charged at the delay bound
        bound = sc.use_case.delay_bound
        missed = sum(t.unserved for t in ticks)
        lat = [x for t in ticks for x in t.latencies] + [sc.baseline_latency + bound] * missed
        over = [x for t in ticks for x in t.overheads] + [bound] * missed
        rows.append(LevelStats(seed, level, clients, pods, utils,
                               float(np.mean(lat)) if lat else 0.0,
                               float(np.mean(over)) if over else 0.0, counts))
    return rows, total, violations, placements


def evaluate(policy: QFunction | Policy | str, scenario: Scenario, seeds: Sequence[int],
             *, hdql_eta: float | None = None, settle_fraction: float = 0.5) -> EvalMetrics:
    """Exploit-only rollouts of ``policy`` (a Q-function, "heuristic" or a callable)."""
    if not seeds:
        raise ValueError("evaluate needs at least one seed")
    if isinstance(policy, str):
        if policy != "heuristic":
            raise ValueError(f"unknown policy name {policy!r}")
        fn: Policy = heuristic_policy
    elif callable(policy) and not hasattr(policy, "values"):
        fn = policy
    elif hdql_eta is not None:
        fn = hdql_policy(policy, hdql_eta)
    else:
        fn = q_policy(policy)
    env = ProvisioningEnv(scenario, seeds[0])
    levels: list[LevelStats] = []
    rewards: list[float] = []
    violations = placements = 0
    for s in seeds:
        rows, total, v, n = rollout(env, fn, s, settle_fraction)
        levels.extend(rows)
        rewards.append(total)
        violations += v
        placements += n
    return EvalMetrics(levels, rewards, violations, placements)
