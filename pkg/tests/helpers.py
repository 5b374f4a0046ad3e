"""Instance builders shared by several test modules."""

import numpy as np

from msgflow.flows import enumerate_flows
from msgflow.gnn import GnnModel, MaskedForward, init_model
from msgflow.sampling import ClassGame, sample_marginal_contributions
from oracles import random_graph


def rel_err(analytic, numeric):
    """Entrywise relative error; entries far below the gradient's scale use that scale."""
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    floor = 1e-3 * max(np.abs(numeric).max(), 1e-12)
    return float(np.max(np.abs(analytic - numeric) / np.maximum(np.abs(numeric), floor)))


def refiner_instance(rng, steps=4):
    """Random graph-task model, its masked forward, flow index and sampled table."""
    n = int(rng.integers(3, 6))
    T = int(rng.integers(2, 4))
    g = random_graph(rng, n, p=0.5, symmetric=True)
    kind = "gcn" if rng.random() < 0.5 else "gin"
    model = init_model(kind, 2, 5, 3, T, seed=int(rng.integers(2**31)))
    fwd = MaskedForward(model, g)
    idx = enumerate_flows(g, T)
    table = sample_marginal_contributions(ClassGame(fwd), idx, num_steps=steps,
                                          seed=int(rng.integers(2**31)))
    return fwd, idx, table


def toy_model(a=1.0, c=0.0, w=1.0):
    """1-layer GCN, width 1, head ``logits = [a * relu(mean h) + c, 0]``."""
    return GnnModel(
        kind="gcn", task="graph",
        conv=[{"W": np.array([[w]]), "b": np.zeros(1)}],
        head={"W1": np.eye(1), "b1": np.zeros(1),
              "W2": np.array([[a, 0.0]]), "b2": np.array([c, 0.0])},
        dropout=0.0,
    )
