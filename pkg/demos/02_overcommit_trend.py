"""
Why profiled demand is not enough
=================================

The heuristic packs instances to their profiled demand. Real load is
bursty, and when the client count grows the sessions already mapped keep
their instances. Utilisation climbs past 100% and processing delay grows
steeply with it.
"""
import numpy as np

from bfcprov.agent import evaluate
from bfcprov.harness.scenarios import builtin_scenario

sc = builtin_scenario("ehr", burst_sigma=0.15)
seeds = [0, 1, 2, 3, 4]
m = evaluate("heuristic", sc, seeds)

util_f = m.utilization_by_level("F")
util_t = m.utilization_by_level("T")
over = m.overhead_by_level()
print("clients  firewall%  encrypt%  overhead_ms")
for c in sc.client_schedule:
    print("%7d  %9.1f  %8.1f  %11.2f" % (c, 100 * util_f[c], 100 * util_t[c], over[c]))

# %%
# Same run without bursts: the profile alone already overcommits once
# re-profiled sessions outgrow their instances.
calm = evaluate("heuristic", builtin_scenario("ehr", burst_sigma=0.0), seeds)
print("\nno bursts, overhead by level:",
      {c: round(v, 2) for c, v in calm.overhead_by_level().items()})
print("mean overhead with / without bursts: %.2f / %.2f ms"
      % (m.mean_overhead, calm.mean_overhead))
print("total reward per episode: %.1f" % np.mean(m.total_reward))
