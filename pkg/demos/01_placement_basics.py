"""
Placing one chain by hand, by the greedy heuristic and by exhaustive search
===========================================================================

The EHR infrastructure has two healthcare clusters linked both ways and a
research cluster that policy keeps out of the chain.
"""
from bfcprov.catalog import make_bfc_request
from bfcprov.chainstate import ProvisioningState, apply_map, apply_place, expected_latency
from bfcprov.greedy import greedy_provision
from bfcprov.harness.oracle import brute_force_oracle
from bfcprov.harness.scenarios import builtin_scenario
from bfcprov.topology import npop_candidates

sc = builtin_scenario("ehr")
print("clusters:", sc.graph.cluster_ids)
print("eligible from ingress", sc.ingress, "->", sorted(npop_candidates(sc.graph, sc.ingress)))

# one request: firewall then encryption, a single client
req = make_bfc_request(sc.use_case, sc.chain, 1, ingress=sc.ingress, egress=sc.egress)

# %%
# The heuristic maps onto live instances first and places the smallest
# size that covers the demand only when nothing fits.
plan = greedy_provision(sc.graph, ProvisioningState(), sc.catalog, req, candidates=sc.candidates)
for a in plan:
    print("  greedy:", a)

# %%
# The oracle enumerates every feasible placement and mapping. Splitting
# the chain across clusters costs a link and an extra discovery lookup,
# so the co-located plan wins.
best = brute_force_oracle(sc.graph, sc.catalog, req)
print("oracle: %d placements, %.2f ms expected" % (best.placements, best.latency))
for a in best.plan:
    print("  oracle:", a)

# %%
# Ten clients saturate a small firewall exactly, so a second request of
# five clients needs fresh instances for both functions.
state = ProvisioningState()
for rid, clients in enumerate((10, 5)):
    r = make_bfc_request(sc.use_case, sc.chain, clients, request_id=rid,
                         ingress=sc.ingress, egress=sc.egress)
    steps = greedy_provision(sc.graph, state, sc.catalog, r, candidates=sc.candidates)
    print("request %d (%d clients):" % (rid, clients), [str(a) for a in steps])
    # apply the plan so the next request sees it
    for a in steps:
        if a.verb == "Place":
            apply_place(state, sc.graph, a.cluster, a.kind, a.size, sc.catalog)
        else:
            apply_map(state, sc.graph, sc.catalog, state.instances_on(a.cluster, a.kind)[a.slot],
                      r, a.position)
    print("   expected latency %.2f ms" % expected_latency(state, sc.graph, sc.catalog, r))
