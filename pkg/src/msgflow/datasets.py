"""Synthetic datasets with ground-truth motifs.

* BA-Shapes: one BA graph with house motifs; node labels mark motif roles.
* BA-LRP: BA graphs grown by preferential attachment (class 0) or by
  attachment inversely proportional to degree (class 1).
* BA-INFE: BA base graph with motifs of two classes; the label is the
  class with more motifs. Class A motifs are the house and the 5-cycle,
  class B motifs the 4-star and the triangle with a tail.

Every generator is a pure function of its parameters and seed. Undirected
edges are stored in both directions and every node gets a self-loop.
Features are a constant 1 per node.
"""

from __future__ import annotations

import json
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import Graph, build_graph, undirected

SPLIT_FRACTIONS = (0.8, 0.1, 0.1)

MOTIFS = {
    # name: (num_nodes, undirected internal edges)
    "house": (5, [(0, 1), (0, 2), (1, 2), (1, 3), (2, 4), (3, 4)]),
    "cycle5": (5, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]),
    "star4": (4, [(0, 1), (0, 2), (0, 3)]),
    "tri_tail": (4, [(0, 1), (1, 2), (2, 0), (2, 3)]),
    "k4": (4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]),
    "diamond": (4, [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)]),
    "wheel4": (5, [(0, 1), (0, 2), (0, 3), (0, 4), (1, 2), (2, 3), (3, 4), (4, 1)]),
    "k5": (5, [(a, b) for a in range(5) for b in range(a + 1, 5)]),
    "fan4": (5, [(0, 1), (0, 2), (0, 3), (0, 4), (1, 2), (2, 3), (3, 4)]),
}
INFE_CLASSES = (("house", "cycle5"), ("star4", "tri_tail"))
# house roles: roof 1, middle 2, bottom 3
HOUSE_ROLES = (1, 2, 2, 3, 3)


@dataclass
class Dataset:
    name: str
    task: str
    graphs: list
    splits: dict
    params: dict = field(default_factory=dict)
    seed: int = 0
    num_classes: int = 2

    def __len__(self) -> int:
        return len(self.graphs)

    def manifest(self) -> dict:
        return {
            "name": self.name,
            "task": self.task,
            "params": self.params,
            "seed": self.seed,
            "num_graphs": len(self.graphs),
            "num_classes": self.num_classes,
            "splits": {k: [int(i) for i in v] for k, v in self.splits.items()},
        }

    def save(self, out_dir, force: bool = False) -> None:
        out = Path(out_dir)
        if out.exists() and any(out.iterdir()):
            if not force:
                raise FileExistsError(f"{out} exists and is not empty")
            shutil.rmtree(out)
        (out / "graphs").mkdir(parents=True, exist_ok=True)
        for i, g in enumerate(self.graphs):
            g.save(out / "graphs" / f"{i:06d}.json")
        (out / "manifest.json").write_text(json.dumps(self.manifest(), indent=1, sort_keys=True))

    @classmethod
    def load(cls, in_dir) -> "Dataset":
        src = Path(in_dir)
        if not (src / "manifest.json").is_file():
            raise FileNotFoundError(f"no dataset manifest in {src}")
        doc = json.loads((src / "manifest.json").read_text())
        graphs = [Graph.load(src / "graphs" / f"{i:06d}.json") for i in range(doc["num_graphs"])]
        return cls(name=doc["name"], task=doc["task"], graphs=graphs,
                   splits={k: np.asarray(v, dtype=np.int64) for k, v in doc["splits"].items()},
                   params=doc["params"], seed=doc["seed"], num_classes=doc["num_classes"])


def make_splits(n: int, seed: int) -> dict:
    """Random 80/10/10 train/val/test split of ``range(n)``."""
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(SPLIT_FRACTIONS[0] * n))
    n_val = int(round(SPLIT_FRACTIONS[1] * n))
    return {"train": np.sort(perm[:n_train]),
            "val": np.sort(perm[n_train:n_train + n_val]),
            "test": np.sort(perm[n_train + n_val:])}


def _grow_ba(n: int, m: int, rng: np.random.Generator, rule: str = "preferential"):
    """Undirected BA edge list.

    Starts from a star on ``m + 1`` nodes (``m`` edges); each later node
    attaches to ``m`` distinct earlier nodes, so there are ``m * (n - m)``
    edges in total. ``rule="inverse"`` weights targets by ``1 / degree``.
    """
    if not (1 <= m < n):
        raise ValueError(f"BA graphs need n > attach_m >= 1, got n={n}, attach_m={m}")
    edges = [(0, v) for v in range(1, m + 1)]
    deg = np.zeros(n)
    deg[0] = m
    deg[1:m + 1] = 1
    for v in range(m + 1, n):
        w = deg[:v] if rule == "preferential" else 1.0 / deg[:v]
        targets = rng.choice(v, size=m, replace=False, p=w / w.sum())
        for u in sorted(int(t) for t in targets):
            edges.append((u, v))
            deg[u] += 1
        deg[v] = m
    return edges


def gen_ba_graph(n: int, attach_m: int = 1, seed: int = 0, rule: str = "preferential",
                 label: int | None = None) -> Graph:
    """Barabási-Albert graph as symmetric directed pairs plus self-loops."""
    rng = np.random.default_rng(seed)
    edges = _grow_ba(n, attach_m, rng, rule)
    return build_graph(undirected(edges), np.ones((1, n)), label=label)


def gen_ba_shapes(num_base_nodes: int = 300, num_motifs: int = 80, seed: int = 0,
                  attach_m: int = 5) -> Dataset:
    """Node-classification graph: BA base plus house motifs attached by one edge each.

    Labels: 0 base, 1 roof, 2 middle, 3 bottom. Ground truth is the set of
    motif-internal undirected edges.
    """
    rng = np.random.default_rng(seed)
    edges = _grow_ba(num_base_nodes, attach_m, rng)
    labels = [0] * num_base_nodes
    truth = []
    n_nodes, house_edges = MOTIFS["house"]
    for k in range(num_motifs):
        off = num_base_nodes + k * n_nodes
        internal = [(off + a, off + b) for a, b in house_edges]
        edges += internal
        truth += [(min(u, v), max(u, v)) for u, v in internal]
        labels += list(HOUSE_ROLES)
        edges.append((int(rng.integers(num_base_nodes)), off + 3))
    n = num_base_nodes + num_motifs * n_nodes
    graph = build_graph(undirected(edges), np.ones((1, n)), node_labels=labels,
                        ground_truth=truth)
    params = {"num_base_nodes": num_base_nodes, "num_motifs": num_motifs, "attach_m": attach_m}
    return Dataset(name="ba-shapes", task="node", graphs=[graph], splits=make_splits(n, seed),
                   params=params, seed=seed, num_classes=4)


def gen_ba_lrp(num_graphs: int = 20000, nodes_per_graph: int = 20, seed: int = 0) -> Dataset:
    """Balanced two-class BA dataset (degree-concentrated vs evenly grown)."""
    children = np.random.SeedSequence(seed).spawn(num_graphs)
    graphs = []
    for i, child in enumerate(children):
        label = i % 2
        rng = np.random.default_rng(child)
        edges = _grow_ba(nodes_per_graph, 1, rng, "preferential" if label == 0 else "inverse")
        graphs.append(build_graph(undirected(edges), np.ones((1, nodes_per_graph)), label=label))
    params = {"num_graphs": num_graphs, "nodes_per_graph": nodes_per_graph}
    return Dataset(name="ba-lrp", task="graph", graphs=graphs,
                   splits=make_splits(num_graphs, seed), params=params, seed=seed)


def _infe_graph(rng: np.random.Generator, label: int, core: int, extra: int,
                max_nodes: int, attach_m: int, classes=INFE_CLASSES):
    motifs = []
    for cls in (0, 1):
        count = core + (extra if cls == label else 0)
        motifs += [classes[cls][int(rng.integers(len(classes[cls])))] for _ in range(count)]
    rng.shuffle(motifs)
    motif_nodes = sum(MOTIFS[name][0] for name in motifs)
    n_base = max_nodes - motif_nodes
    edges = _grow_ba(n_base, attach_m, rng)
    truth = []
    off = n_base
    for name in motifs:
        size, internal = MOTIFS[name]
        for a, b in internal:
            u, v = off + a, off + b
            edges.append((u, v))
            truth.append((min(u, v), max(u, v)))
        truth += [(off + a, off + a) for a in range(size)]
        edges.append((int(rng.integers(n_base)), off + int(rng.integers(size))))
        off += size
    return build_graph(undirected(edges), np.ones((1, off)), label=label,
                       ground_truth=truth), motifs


def gen_ba_infe(num_graphs: int = 2000, seed: int = 0, core_range=(1, 3), extra_range=(1, 3),
                max_nodes: int = 39, min_base: int = 8, attach_m: int = 1,
                classes=INFE_CLASSES) -> Dataset:
    """Motif-majority dataset.

    Each graph gets ``core`` motifs of each class and ``extra`` more of the
    label class (both drawn uniformly from their ranges); draws whose motifs
    leave fewer than ``min_base`` base nodes are redrawn. The BA base fills
    the graph up to ``max_nodes`` nodes. Ground truth holds the motif-internal
    undirected edges and the self-loops of motif nodes.
    """
    children = np.random.SeedSequence(seed).spawn(num_graphs)
    graphs = []
    classes = tuple(tuple(c) for c in classes)
    biggest = max(MOTIFS[name][0] for c in classes for name in c)
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        label = i % 2
        while True:
            core = int(rng.integers(core_range[0], core_range[1] + 1))
            extra = int(rng.integers(extra_range[0], extra_range[1] + 1))
            if (2 * core + extra) * biggest + min_base <= max_nodes:
                break
        graph, _ = _infe_graph(rng, label, core, extra, max_nodes, attach_m, classes)
        graphs.append(graph)
    params = {"num_graphs": num_graphs, "core_range": list(core_range),
              "extra_range": list(extra_range), "max_nodes": max_nodes, "min_base": min_base,
              "attach_m": attach_m, "classes": [list(c) for c in classes]}
    return Dataset(name="ba-infe", task="graph", graphs=graphs,
                   splits=make_splits(num_graphs, seed), params=params, seed=seed)


GENERATORS = {"ba-shapes": gen_ba_shapes, "ba-lrp": gen_ba_lrp, "ba-infe": gen_ba_infe}
