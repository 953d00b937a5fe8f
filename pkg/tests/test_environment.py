import numpy as np
import pytest

from bfcprov.actions import NO_OP, map_to, place
from bfcprov.chainstate import UnknownInstance, instance_load
from bfcprov.environment import (InvalidScenario, ProvisioningEnv, action_count,
                                 enumerate_actions, session_clients)
from bfcprov.harness.scenarios import load_scenario


def single_f(**extra):
    """One-function chain on the EHR graph, one session of ``clients``."""
    over = {"scenario.chain": ["F"], "schedule": [10], "burst_sigma": 0.0}
    over.update(extra)
    return load_scenario("ehr", over)


def provision_f(env):
    env.step(place(1, "F", "Small"))
    out = env.step(map_to(1, "F", 0, 0))
    assert out.info["error"] is None
    return env.state.instances_on(1, "F")[0]


def test_reset_is_blank_and_deterministic(ehr):
    env = ProvisioningEnv(ehr)
    obs = env.reset(3)
    assert obs[:3].tolist() == [0, 0, 0]
    assert np.array_equal(obs, env.reset(3))
    assert not env.state.placements


def test_empty_schedule_rejected(ehr):
    with pytest.raises(InvalidScenario):
        ehr.with_overrides(client_schedule=())


def test_place_raises_count_and_costs(ehr):
    env = ProvisioningEnv(ehr, 0)
    before = env.observation()
    out = env.step(place(1, "F", "Small"))
    assert out.observation[3] > before[3]          # count feature for (c1, F)
    assert out.info["r_res"] < 0


def test_map_onto_saturated_instance_is_rejected(ehr):
    sc = ehr.with_overrides(client_schedule=(30,), burst_sigma=0.0)
    env = ProvisioningEnv(sc, 0)
    env.step(place(1, "F", "Small"))
    env.step(map_to(1, "F", 0, 0))                  # session 1 fills the Small F (10 clients)
    env.step(place(1, "T", "Small"))
    env.step(map_to(1, "T", 0, 1))
    snapshot = (dict(env.state.mapping), set(env.state.placements))
    out = env.step(map_to(1, "F", 0, 0))            # session 2 onto the full instance
    assert out.info["error"] == "InsufficientInstanceHeadroom"
    assert (dict(env.state.mapping), set(env.state.placements)) == snapshot
    clean = ProvisioningEnv(sc, 0)
    for a in (place(1, "F", "Small"), map_to(1, "F", 0, 0), place(1, "T", "Small"),
              map_to(1, "T", 0, 1)):
        clean.step(a)
    assert out.reward == pytest.approx(clean.step(NO_OP).reward - sc.invalid_penalty)


def test_noop_reward_is_weighted_sum():
    sc = single_f()
    env = ProvisioningEnv(sc, 0)
    provision_f(env)
    out = env.step(NO_OP)
    uc = sc.use_case
    assert out.reward == pytest.approx(uc.alpha * out.info["r_res"] + uc.beta * out.info["r_perf"])


def test_actual_usage():
    env = ProvisioningEnv(single_f(), 0)
    inst = provision_f(env)
    assert env.actual_usage(inst) == instance_load(env.state, env.scenario.catalog, inst)
    env.step(place(1, "F", "Small"))
    idle = env.state.instances_on(1, "F")[1]
    assert env.actual_usage(idle) == 0
    with pytest.raises(UnknownInstance):
        env.actual_usage(("F", 99))


def test_bursts_can_overcommit():
    env = ProvisioningEnv(single_f(burst_sigma=0.15, schedule=[10] * 3), 0)
    inst = provision_f(env)
    seen = []
    for _ in range(30):
        env.step(NO_OP)
        seen.append(env.utilization(inst))
    assert max(seen) > 1.0
    assert max(seen) <= 1.45 + 1e-9 and min(seen) >= 0.55 - 1e-9


def test_latency_examples(ehr):
    sc = ehr.with_overrides(client_schedule=(1,), burst_sigma=0.0)
    env = ProvisioningEnv(sc, 0)
    for a in (place(1, "F", "Small"), map_to(1, "F", 0, 0), place(1, "T", "Small"),
              map_to(1, "T", 0, 1)):
        env.step(a)
    assert env.simulate_latency(env.requests()[0]) == pytest.approx(1.0)
    env = ProvisioningEnv(sc, 0)
    for a in (place(1, "F", "Small"), map_to(1, "F", 0, 0), place(2, "T", "Small"),
              map_to(2, "T", 0, 1)):
        env.step(a)
    assert env.simulate_latency(env.requests()[0]) == pytest.approx(2.4)


def test_overload_factor_quadratic_variant(ehr):
    env = ProvisioningEnv(ehr.with_overrides(overload_exponent=2.0))
    assert 0.3 * env.overload_factor(1.4) == pytest.approx(0.588)
    assert env.overload_factor(0.9) == 1.0


def test_latency_monotone_in_utilization():
    env = ProvisioningEnv(single_f(), 0)
    inst = provision_f(env)
    req = env.requests()[0]
    lat = []
    for u in np.linspace(0.5, 2.0, 16):
        env.actual[inst] = u * 500
        lat.append(env.simulate_latency(req))
    assert all(b >= a for a, b in zip(lat, lat[1:]))


def test_reward_examples():
    env = ProvisioningEnv(single_f(schedule=[0]), 0)
    assert env.compute_reward()[0] == 0.0
    # saturated instance (10 clients on a Small F) with overhead exactly at the bound
    sc = single_f(delay_bound=0.3)
    env = ProvisioningEnv(sc, 0)
    provision_f(env)
    r, info = env.compute_reward()
    assert info["r_res"] == pytest.approx(0.0)
    assert r == pytest.approx(-sc.use_case.beta)
    # half the capacity idle, zero processing delay so zero overhead
    sc = single_f(**{"catalog.F.Small.base_processing_delay": 0.0,
                     "profiles.EHR.F.baseline_load": 250, "profiles.EHR.F.per_client_load": 0})
    env = ProvisioningEnv(sc, 0)
    provision_f(env)
    assert env.compute_reward()[0] == pytest.approx(-sc.use_case.alpha / 2)


def test_reward_bounds(ehr):
    env = ProvisioningEnv(ehr, 5)
    rng = np.random.default_rng(5)
    lo = env.reward_floor()
    while not env.done:
        r = env.step(int(rng.integers(len(env.actions)))).reward
        assert lo - 1e-12 <= r <= 0.0


def test_reaping_boundary():
    sc = single_f(schedule=[0], idle_timeout=5)
    env = ProvisioningEnv(sc, 0)
    env.step(place(1, "F", "Small"))          # placed at clock 0, clock now 1
    for _ in range(3):
        assert env.step(NO_OP).info["reaped"] == []
    assert env.state.clock == 4                # idle T-1 ticks: still alive
    assert len(env.step(NO_OP).info["reaped"]) == 1


def test_mapped_instances_are_never_reaped():
    env = ProvisioningEnv(single_f(idle_timeout=2, schedule=[10] * 4), 0)
    inst = provision_f(env)
    while not env.done:
        env.step(NO_OP)
        assert inst in env.state.placements


def test_action_space(ehr):
    acts = enumerate_actions(ehr)
    assert len(acts) == action_count(3, 2, 2, 4, 2) == 61
    assert acts[-1] == NO_OP
    tiny = load_scenario("ehr", {"scenario.chain": ["F"], "max_slots": 1,
                                 "catalog": {"F": {"Small": {"cpu_capacity": 500,
                                                             "base_processing_delay": 0.3}}},
                                 "clusters": [{"id": 1, "cpu_capacity": 1000}], "links": [],
                                 "scenario.egress": None})
    assert [a.verb for a in enumerate_actions(tiny)] == ["Place", "Map", "Destroy", "NoOp"]


def test_same_seed_same_outcomes(ehr):
    rng = np.random.default_rng(0)
    seq = rng.integers(61, size=96)
    runs = []
    for _ in range(2):
        env = ProvisioningEnv(ehr, 11)
        runs.append([(round(o.reward, 12), o.observation.tobytes())
                     for o in (env.step(int(a)) for a in seq)])
    assert runs[0] == runs[1]


def test_heuristic_maps_within_capacity(ehr):
    env = ProvisioningEnv(ehr.with_overrides(burst_sigma=0.0), 0)
    while not env.done:
        a = env.heuristic_action()
        before = dict(env.state.mapping)
        env.step(a)
        for key, inst in env.state.mapping.items():
            if before.get(key) != inst and inst in env.state.placements:
                cap = env.state.placements[inst].size.cpu_capacity
                assert instance_load(env.state, ehr.catalog, inst) <= cap + 1e-9


def test_sessions_split_evenly(ehr):
    assert session_clients(ehr, 0) == []
    assert session_clients(ehr, 1) == [1]
    assert session_clients(ehr, 40) == [14, 13, 13]
    assert sum(session_clients(ehr, 50)) == 50
