import json

import numpy as np
import pytest

from bfcprov.catalog import make_bfc_request
from bfcprov.chainstate import ProvisioningState, apply_map, apply_place, check_constraints
from bfcprov.greedy import Infeasible, greedy_provision
from bfcprov.harness.cli import main
from bfcprov.harness.experiment import (ExperimentConfig, episodes_to_threshold, reward_threshold,
                                        run_experiment, split_overrides)
from bfcprov.harness.oracle import TooLargeToEnumerate, brute_force_oracle
from bfcprov.harness.randomized import random_instance
from bfcprov.harness.reporting import (SUMMARY_KEYS, TRACE_HEADER, TraceRow, emit_summary,
                                       emit_trace, read_trace)
from bfcprov.harness.scenarios import UnknownScenario, builtin_scenario, load_scenario
from bfcprov.topology import build_infrastructure


def realise(inst, plan):
    st = inst.state.copy()
    for a in plan:
        if a.verb == "Place":
            apply_place(st, inst.graph, a.cluster, a.kind, a.size, inst.catalog)
        else:
            apply_map(st, inst.graph, inst.catalog, st.instances_on(a.cluster, a.kind)[a.slot],
                      inst.request, a.position)
    return st


# -- oracle ----------------------------------------------------------------

def test_oracle_ehr_one_client(ehr, ehr_request):
    res = brute_force_oracle(ehr.graph, ehr.catalog, ehr_request())
    assert res.placements == 2
    assert res.latency == pytest.approx(0.6)
    assert res.latency < 1.6
    clusters = {a.cluster for a in res.plan}
    assert len(clusters) == 1 and 3 not in clusters


def test_oracle_single_cluster_single_function(ehr):
    g = build_infrastructure([{"id": 1, "cpu_capacity": 2000}])
    req = make_bfc_request(ehr.use_case, ["F"], 3, ingress=1)
    assert brute_force_oracle(g, ehr.catalog, req).placements == 1


def test_oracle_refuses_five_clusters(ehr):
    g = build_infrastructure([{"id": i, "cpu_capacity": 1000} for i in range(1, 6)])
    req = make_bfc_request(ehr.use_case, ["F"], 1, ingress=1)
    with pytest.raises(TooLargeToEnumerate):
        brute_force_oracle(g, ehr.catalog, req)


def test_oracle_reuses_existing_instances(ehr, ehr_request, state):
    apply_place(state, ehr.graph, 1, "F", "Small", ehr.catalog)
    assert brute_force_oracle(ehr.graph, ehr.catalog, ehr_request(), state).placements == 1


def test_oracle_infeasible(ehr):
    huge = make_bfc_request(ehr.use_case, ["F"], 1000, ingress=1)
    with pytest.raises(Infeasible):
        brute_force_oracle(ehr.graph, ehr.catalog, huge)


def test_oracle_plan_is_feasible(ehr, ehr_request):
    res = brute_force_oracle(ehr.graph, ehr.catalog, ehr_request(8))
    st = ProvisioningState()
    req = ehr_request(8)
    for a in res.plan:
        if a.verb == "Place":
            apply_place(st, ehr.graph, a.cluster, a.kind, a.size, ehr.catalog)
        else:
            apply_map(st, ehr.graph, ehr.catalog, st.instances_on(a.cluster, a.kind)[a.slot],
                      req, a.position)
    assert st.is_fully_mapped(req.id) and not check_constraints(st, ehr.graph, ehr.catalog)


def test_greedy_never_beats_the_count_oracle():
    rng = np.random.default_rng(7)
    checked = 0
    while checked < 120:
        inst = random_instance(rng)
        try:
            best = brute_force_oracle(inst.graph, inst.catalog, inst.request, inst.state,
                                      objective="count")
        except Infeasible:
            continue
        checked += 1
        try:
            plan = greedy_provision(inst.graph, inst.state, inst.catalog, inst.request)
        except Infeasible:
            continue
        assert sum(a.verb == "Place" for a in plan) >= best.placements
        assert not check_constraints(realise(inst, plan), inst.graph, inst.catalog)


# -- scenarios -------------------------------------------------------------

def test_builtin_scenarios_load():
    for name in ("ehr", "ml-share", "streaming"):
        sc = builtin_scenario(name)
        assert sc.client_schedule and sc.chain


def test_unknown_scenario():
    with pytest.raises(UnknownScenario):
        load_scenario("no-such-scenario")


def test_overrides_reach_the_scenario():
    sc = load_scenario("ehr", {"burst_sigma": 0.0, "alpha": 0.2, "beta": 0.8})
    assert sc.burst_sigma == 0.0
    assert not sc.use_case.resource_first


def test_split_overrides():
    agent, scen = split_overrides({"gamma": 0.5, "agent.batch_size": 8, "burst_sigma": 0.1})
    assert agent == {"gamma": 0.5, "batch_size": 8}
    assert scen == {"burst_sigma": 0.1}


# -- reporting -------------------------------------------------------------

def test_empty_trace_is_header_only(tmp_path):
    path = emit_trace([], tmp_path / "t.csv")
    assert path.read_bytes() == (",".join(TRACE_HEADER) + "\n").encode()


def test_one_row_two_lines(tmp_path):
    row = TraceRow(0, 10, 1, "F", 2, 0.2349, 1.5, 1.1)
    text = emit_trace([row], tmp_path / "t.csv").read_text(encoding="utf-8")
    lines = text.split("\n")
    assert len(lines) == 3 and lines[-1] == ""
    assert lines[1] == "0,10,1,F,2,23.490,1.500,1.100"
    assert "\r" not in text


def test_summary_keys(tmp_path):
    with pytest.raises(KeyError):
        emit_summary({"violations": 0}, tmp_path / "s.json")
    path = emit_summary({k: 0 for k in SUMMARY_KEYS} | {"extra": 1}, tmp_path / "s.json")
    assert list(json.loads(path.read_text())) == list(SUMMARY_KEYS)


# -- thresholds ------------------------------------------------------------

def test_reward_threshold_negative_and_positive():
    assert reward_threshold(-10.0) == pytest.approx(-11.0)
    assert reward_threshold(10.0) == pytest.approx(9.0)


def test_episodes_to_threshold_uses_trailing_mean():
    curve = [-20] * 5 + [-1] * 5
    assert episodes_to_threshold(curve, -5.0, window=1) == 6
    assert episodes_to_threshold(curve, -5.0, window=4) == 9
    assert episodes_to_threshold(curve, 0.0) is None
    # a lucky first episode does not count until the window is full
    assert episodes_to_threshold([0.0] + [-20.0] * 9, -5.0, window=3) is None


# -- experiments and CLI ---------------------------------------------------

def test_heuristic_run_writes_reports(tmp_path):
    cfg = ExperimentConfig("ehr", "heuristic", seeds=(0, 1), out=tmp_path)
    rep = run_experiment(cfg)
    rows = read_trace(tmp_path / "trace.csv")
    sc = builtin_scenario("ehr")
    assert len(rows) == 2 * len(sc.client_schedule) * 3 * 2
    assert all(r["pods"] == "0" for r in rows if r["cluster"] == "3")
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["episodes_to_threshold"] is None
    # re-profiled sessions overcommit their instances; the count is reported, not hidden
    assert isinstance(summary["violations"], int) and summary["violations"] >= 0
    assert not (tmp_path / "curve.csv").exists()
    assert rep.summary == summary


def test_oracle_run(tmp_path):
    rep = run_experiment(ExperimentConfig("ehr", "oracle", seeds=(0,), out=tmp_path))
    assert rep.summary["total_placements"] >= 2
    rows = read_trace(tmp_path / "trace.csv")
    assert all(r["pods"] == "0" for r in rows if r["cluster"] == "3")


def test_training_run_writes_curve(tmp_path):
    rep = run_experiment(ExperimentConfig("streaming", "dql", episodes=2, seeds=(3,),
                                          out=tmp_path, overrides={"batch_size": 4}))
    lines = (tmp_path / "curve.csv").read_text().splitlines()
    assert lines[0] == "seed,episode,reward" and len(lines) == 3
    assert "episodes_to_threshold" in rep.summary


def test_training_needs_episodes():
    with pytest.raises(ValueError):
        ExperimentConfig("streaming", "dql", episodes=0)
    with pytest.raises(ValueError):
        ExperimentConfig("ehr", "random")


def test_cli_ok(tmp_path, capsys):
    code = main(["run", "--scenario", "ehr", "--agent", "heuristic", "--seeds", "0",
                 "--out", str(tmp_path), "--override", "burst_sigma=0.1"])
    assert code == 0
    assert (tmp_path / "trace.csv").exists()


def test_cli_rejects_zero_episodes(tmp_path, capsys):
    code = main(["run", "--scenario", "streaming", "--agent", "dql", "--episodes", "0",
                 "--out", str(tmp_path)])
    assert code != 0
    assert "episodes" in capsys.readouterr().err


def test_cli_unknown_scenario(tmp_path, capsys):
    code = main(["run", "--scenario", "atlantis", "--agent", "heuristic",
                 "--out", str(tmp_path)])
    assert code != 0
    assert capsys.readouterr().err
