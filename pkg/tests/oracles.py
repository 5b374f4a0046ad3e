"""Independent reference computations used as test oracles.

Nothing here calls into the code under test beyond reading graph fields.
"""

import itertools
import math

import numpy as np


def random_graph(rng, n, p=0.4, self_loops=True, symmetric=False):
    """Random directed graph as an edge list (optionally with every self-loop)."""
    from msgflow.graph import build_graph

    pairs = set()
    for u in range(n):
        for v in range(n):
            if u != v and rng.random() < p:
                pairs.add((u, v))
                if symmetric:
                    pairs.add((v, u))
    pairs = sorted(pairs)
    x = rng.standard_normal((2, n))
    return build_graph(pairs, x, add_self_loops=self_loops)


def brute_walks(graph, T):
    """All T-step walks by scanning every node sequence."""
    edges = {tuple(e) for e in graph.edges.tolist()}
    out = []
    for seq in itertools.product(range(graph.num_nodes), repeat=T + 1):
        if all((seq[i], seq[i + 1]) in edges for i in range(T)):
            out.append(seq)
    return out


def dense_gcn_hat(graph):
    """D^-1/2 (A+I) D^-1/2 by explicit loops (self-loops already in the edge list)."""
    n = graph.num_nodes
    a = np.zeros((n, n))
    for u, v in graph.edges.tolist():
        a[u, v] = 1.0
    d = a.sum(axis=1)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if a[i, j]:
                out[i, j] = 1.0 / math.sqrt(d[i] * d[j])
    return out


def reference_logits(model, graph, mask=None):
    """Plain-loop forward pass: aggregate with masked connectivity, per-layer MLP, mean pool."""
    T = len(model.conv)
    E = graph.num_edges
    mask = np.ones(E * T) if mask is None else np.asarray(mask, dtype=float)
    if model.kind == "gcn":
        base = dense_gcn_hat(graph)
    else:
        base = np.zeros((graph.num_nodes,) * 2)
        for u, v in graph.edges.tolist():
            base[u, v] = (1.0 + model.eps) if u == v else 1.0
    h = graph.features.T.copy()
    for t, p in enumerate(model.conv):
        c = np.zeros_like(base)
        for e, (u, v) in enumerate(graph.edges.tolist()):
            c[u, v] = base[u, v] * mask[t * E + e]
        s = c.T @ h
        if model.kind == "gcn":
            h = np.maximum(s @ p["W"] + p["b"], 0)
        else:
            h = np.maximum(np.maximum(s @ p["W1"] + p["b1"], 0) @ p["W2"] + p["b2"], 0)
    if model.task == "graph":
        h = h.mean(axis=0)
    z = np.maximum(h @ model.head["W1"] + model.head["b1"], 0)
    return z @ model.head["W2"] + model.head["b2"]


def central_difference(f, x, h=1e-4):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def permutation_shapley(value, n):
    """Shapley values as the average marginal over all n! orders (removal-free, add order)."""
    phi = np.zeros(n)
    count = 0
    for perm in itertools.permutations(range(n)):
        kept = np.zeros(n)
        prev = value(kept)
        for e in perm:
            kept[e] = 1.0
            cur = value(kept)
            phi[e] += cur - prev
            prev = cur
        count += 1
    return phi / count
