"""
Learning to provision ahead of the load
=======================================

A deep Q-learning agent runs the same EHR episodes as the heuristic. The
reward weighs resource waste above latency, so the agent has to learn to
keep instances busy without letting them overflow when the client count
jumps.

Usage: python 03_learning_to_scale.py [episodes]   (default 400; the
acceptance runs use 2000)
"""
import sys
import time

import numpy as np

from bfcprov.agent import AgentConfig, evaluate, q_policy, train
from bfcprov.environment import ProvisioningEnv
from bfcprov.harness.scenarios import builtin_scenario

episodes = int(sys.argv[1]) if len(sys.argv) > 1 else 400
sc = builtin_scenario("ehr")

t0 = time.perf_counter()
result = train(lambda: ProvisioningEnv(sc), "dql", AgentConfig(), episodes, seed=0)
print("trained %d episodes in %.0fs" % (episodes, time.perf_counter() - t0))

# learning curve in tenths
curve = np.asarray(result.curve)
print("reward by tenth of training:",
      [round(float(c.mean()), 1) for c in np.array_split(curve, 10)])

# %%
# Exploit-only evaluation on unseen seeds, next to the heuristic
seeds = [100, 101, 102]
agent = evaluate(q_policy(result.q_function), sc, seeds)
heur = evaluate("heuristic", sc, seeds)
print("\nclients  heur_util%  dql_util%  heur_ms  dql_ms")
hu, du = heur.utilization_by_level(), agent.utilization_by_level()
ho, do = heur.overhead_by_level(), agent.overhead_by_level()
for c in sc.client_schedule:
    print("%7d  %10.1f  %9.1f  %7.2f  %6.2f" % (c, 100 * hu[c], 100 * du[c], ho[c], do[c]))
print("reward per episode: heuristic %.1f, dql %.1f"
      % (np.mean(heur.total_reward), np.mean(agent.total_reward)))
