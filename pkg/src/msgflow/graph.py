"""Graph data model, connectivity matrices and the layer-edge universe.

Edges are directed ``(src, dst)`` pairs. An undirected dataset edge is
stored as two directed pairs, each independently removable. Self-loops are
explicit edges appended after the declared ones, so every mask and
permutation indexes against one canonical edge order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np


class GraphError(ValueError):
    """Raised when a graph violates its structural invariants."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Directed graph with a ``d x n`` feature matrix.

    Attributes
    ----------
    num_nodes : int
    edges : ndarray of shape (E, 2)
        Directed edges in canonical order (self-loops included when present).
    features : ndarray of shape (d, n)
        Column ``i`` is the feature vector of node ``i``.
    label : int or None
        Graph class for graph-classification data.
    node_labels : ndarray or None
        Per-node classes for node-classification data.
    ground_truth : tuple of (int, int)
        Explanation ground truth. ``(u, v)`` with ``u != v`` is an undirected
        edge, ``(v, v)`` a self-loop.
    """

    num_nodes: int
    edges: np.ndarray
    features: np.ndarray
    label: int | None = None
    node_labels: np.ndarray | None = None
    ground_truth: tuple[tuple[int, int], ...] = ()
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim != 2:
            raise GraphError(f"features must be 2-d (d x n), got shape {features.shape}")
        if features.shape[1] != self.num_nodes:
            raise GraphError(
                f"feature matrix has {features.shape[1]} columns but the graph has "
                f"{self.num_nodes} nodes"
            )
        if features.shape[0] < 1:
            raise GraphError("feature dimension d must be >= 1")
        if edges.size and (edges.min() < 0 or edges.max() >= self.num_nodes):
            bad = edges[(edges < 0).any(1) | (edges >= self.num_nodes).any(1)][0]
            raise GraphError(f"edge {tuple(bad.tolist())} has an endpoint outside [0, {self.num_nodes})")
        index = {}
        for k, (u, v) in enumerate(edges.tolist()):
            if (u, v) in index:
                raise GraphError(f"duplicate edge {(u, v)}")
            index[(u, v)] = k
        edges.setflags(write=False)
        features.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "_index", index)
        if self.node_labels is not None:
            labels = np.asarray(self.node_labels, dtype=np.int64)
            labels.setflags(write=False)
            object.__setattr__(self, "node_labels", labels)
        gt = tuple((int(u), int(v)) for u, v in self.ground_truth)
        object.__setattr__(self, "ground_truth", gt)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[0]

    @property
    def src(self) -> np.ndarray:
        return self.edges[:, 0]

    @property
    def dst(self) -> np.ndarray:
        return self.edges[:, 1]

    def edge_id(self, src: int, dst: int) -> int:
        try:
            return self._index[(int(src), int(dst))]
        except KeyError:
            raise KeyError(f"edge {(src, dst)} is not in the graph") from None

    def has_edge(self, src: int, dst: int) -> bool:
        return (int(src), int(dst)) in self._index

    def has_self_loops(self) -> bool:
        return all((v, v) in self._index for v in range(self.num_nodes))

    def adjacency(self) -> np.ndarray:
        """0/1 adjacency with ``A[src, dst] = 1``, self-loops included as stored."""
        a = np.zeros((self.num_nodes, self.num_nodes))
        a[self.src, self.dst] = 1.0
        return a

    def out_degree(self) -> np.ndarray:
        return np.bincount(self.src, minlength=self.num_nodes)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        doc = {
            "num_nodes": int(self.num_nodes),
            "edges": self.edges.tolist(),
            "features": self.features.tolist(),
            "label": None if self.label is None else int(self.label),
            "ground_truth": [list(p) for p in self.ground_truth],
        }
        if self.node_labels is not None:
            doc["node_labels"] = self.node_labels.tolist()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "Graph":
        features = np.asarray(doc["features"], dtype=np.float64)
        if features.ndim == 1:
            features = features.reshape(1, -1)
        return cls(
            num_nodes=int(doc["num_nodes"]),
            edges=np.asarray(doc["edges"], dtype=np.int64).reshape(-1, 2),
            features=features,
            label=doc.get("label"),
            node_labels=doc.get("node_labels"),
            ground_truth=tuple(tuple(p) for p in doc.get("ground_truth", ())),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Graph":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "Graph":
        return cls.from_json(Path(path).read_text())


def build_graph(
    edges: Iterable[Sequence[int]],
    features,
    *,
    num_nodes: int | None = None,
    add_self_loops: bool = True,
    label: int | None = None,
    node_labels=None,
    ground_truth=(),
) -> Graph:
    """Build a :class:`Graph`, appending a self-loop for every node that lacks one.

    ``features`` is ``d x n``; a 1-d array is read as a single feature row.
    Duplicate edges and out-of-range endpoints raise :class:`GraphError`.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features.reshape(1, -1)
    if num_nodes is None:
        num_nodes = features.shape[1]
    pairs = [(int(u), int(v)) for u, v in edges]
    if add_self_loops:
        present = {u for u, v in pairs if u == v}
        pairs += [(v, v) for v in range(num_nodes) if v not in present]
    return Graph(
        num_nodes=num_nodes,
        edges=np.asarray(pairs, dtype=np.int64).reshape(-1, 2),
        features=features,
        label=label,
        node_labels=node_labels,
        ground_truth=tuple(ground_truth),
    )


def undirected(pairs: Iterable[Sequence[int]]) -> list[tuple[int, int]]:
    """Expand undirected pairs into both directions, keeping first-seen order."""
    out, seen = [], set()
    for u, v in pairs:
        for e in ((int(u), int(v)), (int(v), int(u))):
            if e not in seen:
                seen.add(e)
                out.append(e)
    return out


def gcn_connectivity(graph: Graph) -> np.ndarray:
    """Symmetrically normalized connectivity ``D^-1/2 (A + I) D^-1/2``.

    Self-loops must already be explicit edges. ``D`` holds the row sums
    of the augmented adjacency.
    """
    a = graph.adjacency()
    deg = a.sum(axis=1)
    if np.any(deg == 0):
        raise GraphError("gcn connectivity needs self-loops on every node")
    inv_sqrt = 1.0 / np.sqrt(deg)
    return inv_sqrt[:, None] * a * inv_sqrt[None, :]


def gin_connectivity(graph: Graph, eps: float = 0.0) -> np.ndarray:
    """Sum-aggregation connectivity ``A + (1 + eps) I`` with the self weight on the loop edges."""
    a = graph.adjacency()
    loops = graph.src == graph.dst
    a[graph.src[loops], graph.dst[loops]] = 1.0 + eps
    return a


def edge_coefficients(graph: Graph, kind: str, eps: float = 0.0) -> np.ndarray:
    """Connectivity value carried by each canonical edge."""
    if kind == "gcn":
        conn = gcn_connectivity(graph)
    elif kind == "gin":
        conn = gin_connectivity(graph, eps)
    else:
        raise ValueError(f"unknown layer kind {kind!r}")
    return conn[graph.src, graph.dst]


class LayerEdgeId(NamedTuple):
    layer: int
    src: int
    dst: int


class LayerEdgeSet:
    """Ordered collection of layer edges over a fixed ``(graph, T)`` universe.

    Canonical id of layer edge ``(t, e)`` is ``(t - 1) * E + e`` (layer-major,
    then edge order). ``ids`` keeps the collection order; ``member`` is the
    membership bitset over the whole universe.
    """

    def __init__(self, graph: Graph, num_layers: int, ids=None):
        if num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        self.graph = graph
        self.num_layers = num_layers
        size = graph.num_edges * num_layers
        if ids is None:
            ids = np.arange(size)
        ids = np.asarray(ids, dtype=np.int64).ravel()
        if ids.size and (ids.min() < 0 or ids.max() >= size):
            raise IndexError("layer edge id outside the universe")
        member = np.zeros(size, dtype=bool)
        member[ids] = True
        if member.sum() != ids.size:
            raise ValueError("duplicate layer edges")
        self.ids = ids
        self.member = member

    @property
    def universe_size(self) -> int:
        return self.member.size

    def __len__(self) -> int:
        return self.ids.size

    def __contains__(self, item) -> bool:
        if isinstance(item, LayerEdgeId):
            item = self.index_of(item)
        return bool(self.member[int(item)])

    def __iter__(self):
        for i in self.ids:
            yield self.layer_edge(int(i))

    def index_of(self, le: LayerEdgeId) -> int:
        if not 1 <= le.layer <= self.num_layers:
            raise KeyError(f"layer {le.layer} outside [1, {self.num_layers}]")
        return (le.layer - 1) * self.graph.num_edges + self.graph.edge_id(le.src, le.dst)

    def layer_edge(self, idx: int) -> LayerEdgeId:
        t, e = divmod(int(idx), self.graph.num_edges)
        u, v = self.graph.edges[e]
        return LayerEdgeId(t + 1, int(u), int(v))

    def mask(self) -> np.ndarray:
        """Binary mask over the universe (1 on members)."""
        return self.member.astype(np.float64)

    def complement(self) -> "LayerEdgeSet":
        return LayerEdgeSet(self.graph, self.num_layers, np.flatnonzero(~self.member))


def enumerate_layer_edges(graph: Graph, num_layers: int) -> LayerEdgeSet:
    """All ``|E| x T`` layer edges in canonical order."""
    return LayerEdgeSet(graph, num_layers)


def computation_subgraph(graph: Graph, node: int, hops: int):
    """Induced subgraph on the ``hops``-hop in-neighbourhood of ``node``.

    Returns ``(subgraph, new_index_of_node, original_node_ids, original_edge_ids)``.
    Edge order follows the parent graph's canonical order. Degree-dependent
    connectivity must be taken from the parent (via ``original_edge_ids``),
    since boundary nodes lose edges in the induced subgraph.
    """
    keep = {int(node)}
    frontier = {int(node)}
    src, dst = graph.src, graph.dst
    for _ in range(hops):
        nxt = set(src[np.isin(dst, list(frontier))].tolist()) - keep
        keep |= nxt
        frontier = nxt
    nodes = np.array(sorted(keep), dtype=np.int64)
    remap = -np.ones(graph.num_nodes, dtype=np.int64)
    remap[nodes] = np.arange(nodes.size)
    sel = (remap[src] >= 0) & (remap[dst] >= 0)
    sub_edges = np.stack([remap[src[sel]], remap[dst[sel]]], axis=1)
    gt = tuple((int(remap[u]), int(remap[v])) for u, v in graph.ground_truth
               if remap[u] >= 0 and remap[v] >= 0)
    sub = Graph(
        num_nodes=nodes.size,
        edges=sub_edges,
        features=graph.features[:, nodes],
        label=graph.label,
        node_labels=None if graph.node_labels is None else graph.node_labels[nodes],
        ground_truth=gt,
    )
    return sub, int(remap[node]), nodes, np.flatnonzero(sel)
