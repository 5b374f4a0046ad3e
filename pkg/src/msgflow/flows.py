"""Message flows: enumeration, counting, and flow/layer-edge incidence.

A flow of a ``T``-layer model is a ``T``-step directed walk
``(v_0, v_1, ..., v_T)``; its carriers are the layer edges
``(1, v_0 -> v_1), ..., (T, v_{T-1} -> v_T)``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .graph import Graph, LayerEdgeId

DEFAULT_FLOW_CAP = 2_000_000


class FlowOverflowError(RuntimeError):
    """The flow count exceeds the configured cap."""


def count_flows(graph: Graph, num_layers: int, target: int | None = None) -> int:
    """Number of ``T``-step walks: sum of the entries of ``A_bin^T``.

    Computed in exact integer arithmetic. With ``target`` set, only walks
    ending at that node are counted.
    """
    n = graph.num_nodes
    a = np.zeros((n, n), dtype=object)
    for u, v in graph.edges.tolist():
        a[u, v] = 1
    walks = np.ones(n, dtype=object)
    for _ in range(num_layers):
        walks = walks.dot(a)
    if target is not None:
        return int(walks[target])
    return int(sum(walks))


class FlowIndex:
    """All flows of one ``(graph, T)`` in lexicographic node-sequence order.

    Attributes
    ----------
    nodes : ndarray of shape (F, T + 1)
    carriers : ndarray of shape (F, T)
        Canonical layer-edge id of each flow's ``t``-th carrier.
    """

    def __init__(self, graph: Graph, num_layers: int, nodes: np.ndarray):
        self.graph = graph
        self.num_layers = num_layers
        self.nodes = nodes
        self.nodes.setflags(write=False)
        e = graph.num_edges
        edge_of = -np.ones((graph.num_nodes, graph.num_nodes), dtype=np.int64)
        edge_of[graph.src, graph.dst] = np.arange(e)
        cols = [t * e + edge_of[nodes[:, t], nodes[:, t + 1]] for t in range(num_layers)]
        self.carriers = np.stack(cols, axis=1) if cols else np.zeros((0, 0), np.int64)
        self.carriers.setflags(write=False)
        flat = self.carriers.ravel()
        order = np.argsort(flat, kind="stable")
        self._post_flows = order // num_layers
        counts = np.bincount(flat, minlength=self.num_layer_edges)
        self._indptr = np.concatenate([[0], np.cumsum(counts)])

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def num_flows(self) -> int:
        return len(self.nodes)

    @property
    def num_layer_edges(self) -> int:
        return self.graph.num_edges * self.num_layers

    def _layer_edge_index(self, layer_edge) -> int:
        if isinstance(layer_edge, LayerEdgeId):
            if not 1 <= layer_edge.layer <= self.num_layers:
                raise KeyError(f"layer {layer_edge.layer} outside [1, {self.num_layers}]")
            e = self.graph.edge_id(layer_edge.src, layer_edge.dst)
            return (layer_edge.layer - 1) * self.graph.num_edges + e
        idx = int(layer_edge)
        if not 0 <= idx < self.num_layer_edges:
            raise KeyError(f"layer edge id {idx} outside the universe")
        return idx

    def flows_through(self, layer_edge) -> np.ndarray:
        """Sorted ids of the flows whose ``t``-th carrier is the given layer edge."""
        i = self._layer_edge_index(layer_edge)
        return self._post_flows[self._indptr[i]:self._indptr[i + 1]]

    def posting_sizes(self) -> np.ndarray:
        return np.diff(self._indptr)

    def flow_nodes(self, k: int) -> tuple[int, ...]:
        return tuple(int(v) for v in self.nodes[k])

    def flow_carriers(self, k: int) -> list[LayerEdgeId]:
        v = self.nodes[k]
        return [LayerEdgeId(t + 1, int(v[t]), int(v[t + 1])) for t in range(self.num_layers)]

    def export(self, scores, path=None) -> list[dict]:
        """``[{nodes, score}]`` sorted by score descending (ties by flow id)."""
        scores = np.asarray(scores, dtype=np.float64)
        order = np.lexsort((np.arange(len(scores)), -scores))
        doc = [{"nodes": self.nodes[k].tolist(), "score": float(scores[k])} for k in order]
        if path is not None:
            Path(path).write_text(json.dumps(doc))
        return doc


def enumerate_flows(graph: Graph, num_layers: int, cap: int = DEFAULT_FLOW_CAP,
                    target: int | None = None) -> FlowIndex:
    """Enumerate every ``T``-step walk (optionally only those ending at ``target``).

    Raises :class:`FlowOverflowError` when the count exceeds ``cap``; the
    count is checked before anything is materialized.
    """
    if num_layers < 1:
        raise ValueError("num_layers must be >= 1")
    total = count_flows(graph, num_layers, target)
    if total > cap:
        raise FlowOverflowError(
            f"graph has {total} message flows for T={num_layers}, above the cap of {cap}"
        )
    n = graph.num_nodes
    order = np.lexsort((graph.dst, graph.src))
    succ = graph.dst[order]
    indptr = np.concatenate([[0], np.cumsum(np.bincount(graph.src, minlength=n))])
    alive = [np.ones(n, dtype=bool)] * (num_layers + 1)
    if target is not None:
        # alive[k][v]: v can reach the target in exactly k steps
        a = graph.adjacency() > 0
        alive = [np.zeros(n, dtype=bool) for _ in range(num_layers + 1)]
        alive[0][target] = True
        for k in range(1, num_layers + 1):
            alive[k] = (a & alive[k - 1][None, :]).any(axis=1)
    walks = np.flatnonzero(alive[num_layers]).reshape(-1, 1)
    for step in range(num_layers):
        last = walks[:, -1]
        deg = indptr[last + 1] - indptr[last]
        rows = np.repeat(np.arange(len(walks)), deg)
        offs = np.arange(rows.size) - np.repeat(np.cumsum(deg) - deg, deg)
        nxt = succ[indptr[last][rows] + offs]
        keep = alive[num_layers - step - 1][nxt]
        walks = np.concatenate([walks[rows[keep]], nxt[keep, None]], axis=1)
    nodes = np.ascontiguousarray(walks, dtype=np.int64).reshape(-1, num_layers + 1)
    return FlowIndex(graph, num_layers, nodes)


def intersect(a, b) -> np.ndarray:
    """Intersection of two flow-id sets (sorted)."""
    return np.intersect1d(np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64))


def flows_matching(index: FlowIndex, pattern: dict[int, int]) -> np.ndarray:
    """Flow ids whose node at position ``p`` equals ``pattern[p]`` for every key.

    Direct scan over node sequences; independent of the postings lists.
    """
    sel = np.ones(index.num_flows, dtype=bool)
    for pos, v in pattern.items():
        sel &= index.nodes[:, pos] == v
    return np.flatnonzero(sel)


def flow_bound(graph: Graph, num_layers: int) -> int:
    """``|E| * d_plus^(T-1)`` with ``d_plus`` the largest out-degree."""
    return graph.num_edges * int(graph.out_degree().max()) ** (num_layers - 1)
