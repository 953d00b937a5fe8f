"""Policy-constrained service-function-chain provisioning: greedy, Q-learning and heuristic-boosted Q-learning."""
