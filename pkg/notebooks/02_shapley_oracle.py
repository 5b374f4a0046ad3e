"""
Sampled marginal contributions versus exact Shapley values
==========================================================

The explainer removes layer edges one at a time in random order and
charges each prediction change to the flows that disappear at that step.
Averaged per layer edge, these marginals are Monte-Carlo Shapley values.
On a graph small enough to enumerate every ordering, the average is
exact, which we check here against brute-force subset enumeration.
"""

# %%
import math

import numpy as np

from msgflow import (ClassGame, MaskedForward, build_graph, enumerate_flows, flowx_star,
                     init_model, sample_marginal_contributions, shapley_exact)
from msgflow.sampling import permutation_marginals

g = build_graph([(0, 1)], np.array([[1.0, -0.5], [0.3, 2.0]]))
T = 2
model = init_model("gcn", in_dim=2, hidden=4, num_classes=3, num_layers=T, seed=3)
fwd = MaskedForward(model, g)
game = ClassGame(fwd)  # predicted-class probability under a layer-edge mask
print("layer edges:", fwd.num_layer_edges, " orderings:", math.factorial(fwd.num_layer_edges))

# %%
# Exhaustive mode walks through all 720 orderings.
flows = enumerate_flows(g, T)
table = sample_marginal_contributions(game, flows, exhaustive=True)
exact = shapley_exact(game)
np.set_printoptions(precision=5, suppress=True)
print("sampled:", table.layer_edge_estimates())
print("exact:  ", exact.phi)
print("max |diff|:", np.abs(table.layer_edge_estimates() - exact.phi).max())

# %%
# Along any single ordering the marginals telescope to f(all) - f(none).
perm = np.random.default_rng(0).permutation(fwd.num_layer_edges)
s = permutation_marginals(game, perm)
print("sum of marginals:", s.sum(), " f(all) - f(none):",
      exact.full_value - exact.empty_value)

# %%
# A sampled table has one row per flow and one column per removal position.
# The sampling-only flow score averages each row over the positions where
# that flow was actually removed.
table = sample_marginal_contributions(game, flows, num_steps=50, seed=1)
scores = flowx_star(table)
for k in np.argsort(-scores)[:4]:
    print("flow", flows.flow_nodes(k), "score", round(float(scores[k]), 5))
