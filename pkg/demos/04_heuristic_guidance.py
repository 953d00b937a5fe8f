"""
Letting the heuristic steer early training
==========================================

On the streaming scenario latency dominates the reward. The heuristically
accelerated agent adds a bonus to the heuristic's suggestion while it
exploits during the first part of training, then hands over to its own
Q-values. The plain agent starts from scratch.

Usage: python 04_heuristic_guidance.py [episodes]   (default 500)
"""
import sys

import numpy as np

from bfcprov.agent import AgentConfig, evaluate, train, trained_policy
from bfcprov.environment import ProvisioningEnv
from bfcprov.harness.experiment import episodes_to_threshold, heuristic_reward, reward_threshold
from bfcprov.harness.scenarios import builtin_scenario

episodes = int(sys.argv[1]) if len(sys.argv) > 1 else 500
sc = builtin_scenario("streaming")
cfg = AgentConfig()
threshold = reward_threshold(heuristic_reward(sc, 0))
print("heuristic reward %.1f, threshold %.1f" % (heuristic_reward(sc, 0), threshold))

for mode in ("dql", "hdql"):
    res = train(lambda: ProvisioningEnv(sc), mode, cfg, episodes, seed=0)
    m = evaluate(trained_policy(res, cfg), sc, [100, 101, 102])
    head = min(50, len(res.curve))
    first = [round(float(np.mean(res.curve[i:i + 10])), 1) for i in range(0, head, 10)]
    print("\n%s: first %d episodes in tens %s" % (mode, head, first))
    print("  episodes to threshold:", episodes_to_threshold(res.curve, threshold))
    print("  mean overhead %.2f ms, mean utilization %.1f%%"
          % (m.mean_overhead, 100 * m.mean_utilization))

heur = evaluate("heuristic", sc, [100, 101, 102])
print("\nheuristic: mean overhead %.2f ms, mean utilization %.1f%%"
      % (heur.mean_overhead, 100 * heur.mean_utilization))
