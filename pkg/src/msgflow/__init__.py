"""Explaining graph neural network predictions by message flows.

A message flow is a walk through the layers of a GNN. Flow scores come
from Monte-Carlo marginal contributions over layer-edge removal orders and
are refined by gradient descent on the model's masked prediction.
"""

from .datasets import Dataset, gen_ba_graph, gen_ba_infe, gen_ba_lrp, gen_ba_shapes
from .evaluation import (accuracy, fidelity, fidelity_drop, flow_to_edge_scores, select_topk,
                         sparsity, sparsity_sweep)
from .explain import Explanation, ExplainConfig, explain, sweep_methods
from .flows import FlowIndex, FlowOverflowError, count_flows, enumerate_flows
from .gnn import (GnnModel, MaskedForward, NumericalError, TrainConfig, forward,
                  forward_restricted, grad_wrt_mask, init_model, train)
from .graph import Graph, GraphError, LayerEdgeId, LayerEdgeSet, build_graph, enumerate_layer_edges
from .refine import ExplanationResult, RefinerConfig, flowx_dagger, train_refiner
from .sampling import (ClassGame, FlowScoreTable, flowx_star, sample_marginal_contributions,
                       shapley_exact)

__version__ = "0.1.0"
