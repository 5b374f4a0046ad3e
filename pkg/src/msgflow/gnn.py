"""Small GCN/GIN classifiers with per-layer-edge masking.

All computation works on node-row features ``H`` of shape ``(B, n, d)``
and per-layer connectivity stacks ``C`` of shape ``(B, T, n, n)`` with
``C[b, t, i, j]`` the weight of the message ``i -> j`` at layer ``t + 1``.
Aggregation is ``S = C^T H``, the row-major form of ``S = X A``.

Masking multiplies connectivity entries by mask values before aggregation,
so binary removal and soft restriction share one code path.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import Graph, computation_subgraph, edge_coefficients

log = logging.getLogger(__name__)

LAYER_KINDS = ("gcn", "gin")
TASKS = ("graph", "node")


class NumericalError(RuntimeError):
    """Raised when a loss or gradient becomes non-finite."""


def relu(x):
    return np.maximum(x, 0.0)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class GnnModel:
    """Message-passing classifier ``g(M^T(... M^1(X A^1) ...) A^T)``.

    ``conv`` holds one parameter dict per message-passing layer: ``W``/``b``
    for GCN, ``W1``/``b1``/``W2``/``b2`` (the two-layer MLP) for GIN. The
    classifier head is two fully-connected layers with dropout between them.
    Graph tasks mean-pool node embeddings before the head.
    """

    kind: str
    task: str
    conv: list
    head: dict
    dropout: float = 0.5
    eps: float = 0.0

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"layer kind must be one of {LAYER_KINDS}, got {self.kind!r}")
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")
        dims = self.dims
        if self.head["W1"].shape[0] != dims[-1]:
            raise ValueError("classifier input width does not match the last layer")

    @property
    def num_layers(self) -> int:
        return len(self.conv)

    @property
    def num_classes(self) -> int:
        return self.head["W2"].shape[1]

    @property
    def dims(self) -> list[int]:
        first = "W" if self.kind == "gcn" else "W1"
        last = "W" if self.kind == "gcn" else "W2"
        dims = [self.conv[0][first].shape[0]]
        for p in self.conv:
            if p[first].shape[0] != dims[-1]:
                raise ValueError("consecutive layer dimensions do not compose")
            dims.append(p[last].shape[1])
        return dims

    def parameters(self):
        """Yield ``(name, array)`` pairs in a fixed order."""
        for t, p in enumerate(self.conv):
            for k in sorted(p):
                yield f"conv{t}.{k}", p[k]
        for k in sorted(self.head):
            yield f"head.{k}", self.head[k]

    def copy(self) -> "GnnModel":
        return GnnModel(
            kind=self.kind,
            task=self.task,
            conv=[{k: v.copy() for k, v in p.items()} for p in self.conv],
            head={k: v.copy() for k, v in self.head.items()},
            dropout=self.dropout,
            eps=self.eps,
        )

    # -- checkpoint ----------------------------------------------------------

    def to_dict(self) -> dict:
        if self.kind == "gcn":
            weights = [p["W"].tolist() for p in self.conv]
            biases = [p["b"].tolist() for p in self.conv]
        else:
            weights = [[p["W1"].tolist(), p["W2"].tolist()] for p in self.conv]
            biases = [[p["b1"].tolist(), p["b2"].tolist()] for p in self.conv]
        return {
            "layer_kind": self.kind,
            "T": self.num_layers,
            "task": self.task,
            "dims": self.dims,
            "eps": self.eps,
            "weights": weights,
            "biases": biases,
            "classifier": {
                "weights": [self.head["W1"].tolist(), self.head["W2"].tolist()],
                "biases": [self.head["b1"].tolist(), self.head["b2"].tolist()],
                "dropout": self.dropout,
            },
            "readout": "mean" if self.task == "graph" else "none",
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GnnModel":
        kind = doc["layer_kind"]
        conv = []
        for w, b in zip(doc["weights"], doc["biases"]):
            if kind == "gcn":
                conv.append({"W": np.array(w, dtype=np.float64).reshape(len(w), -1),
                             "b": np.array(b, dtype=np.float64)})
            else:
                conv.append({
                    "W1": np.array(w[0], dtype=np.float64).reshape(len(w[0]), -1),
                    "b1": np.array(b[0], dtype=np.float64),
                    "W2": np.array(w[1], dtype=np.float64).reshape(len(w[1]), -1),
                    "b2": np.array(b[1], dtype=np.float64),
                })
        clf = doc["classifier"]
        head = {
            "W1": np.array(clf["weights"][0], dtype=np.float64),
            "b1": np.array(clf["biases"][0], dtype=np.float64),
            "W2": np.array(clf["weights"][1], dtype=np.float64),
            "b2": np.array(clf["biases"][1], dtype=np.float64),
        }
        model = cls(kind=kind, task=doc.get("task", "graph"), conv=conv, head=head,
                    dropout=float(clf.get("dropout", 0.5)), eps=float(doc.get("eps", 0.0)))
        if model.num_layers != int(doc["T"]):
            raise ValueError("checkpoint T does not match its layer list")
        return model

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "GnnModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def init_model(
    kind: str,
    in_dim: int,
    hidden: int,
    num_classes: int,
    num_layers: int,
    task: str = "graph",
    seed: int = 0,
    dropout: float = 0.5,
    eps: float = 0.0,
) -> GnnModel:
    """Glorot-initialized weights; biases uniform in ``+-1/sqrt(fan_in)``.

    Random biases matter with constant input features: with zero biases every
    layer maps a node to a nonnegative multiple of one shared vector, so the
    embeddings start out rank one.
    """
    rng = np.random.default_rng(seed)

    def bias(fan_in, size):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=size)

    conv = []
    d = in_dim
    for _ in range(num_layers):
        if kind == "gcn":
            conv.append({"W": _glorot(rng, d, hidden), "b": bias(d, hidden)})
        else:
            conv.append({"W1": _glorot(rng, d, hidden), "b1": bias(d, hidden),
                         "W2": _glorot(rng, hidden, hidden), "b2": bias(hidden, hidden)})
        d = hidden
    head = {"W1": _glorot(rng, hidden, hidden), "b1": bias(hidden, hidden),
            "W2": _glorot(rng, hidden, num_classes), "b2": bias(hidden, num_classes)}
    return GnnModel(kind=kind, task=task, conv=conv, head=head, dropout=dropout, eps=eps)


# -- batched forward / backward ------------------------------------------------


def _flat(x):
    return x.reshape(-1, x.shape[-1])


def forward_batch(model: GnnModel, conn, h0, node_mask=None, dropout_rng=None):
    """Run the network on a batch.

    Parameters
    ----------
    conn : array of shape (B, T, n, n)
        Per-layer connectivity (may be a broadcast view).
    h0 : array of shape (B, n, d)
    node_mask : array of shape (B, n), optional
        1 for real nodes, 0 for padding; used by mean pooling.
    dropout_rng : numpy Generator, optional
        Enables training-mode dropout. ``None`` means evaluation mode.

    Returns
    -------
    logits, cache
        ``(B, K)`` for graph tasks, ``(B, n, K)`` for node tasks.
    """
    cache = {"conn": conn, "hs": [h0], "layers": []}
    h = h0
    for t, p in enumerate(model.conv):
        a = conn[:, t]
        s = np.matmul(np.swapaxes(a, 1, 2), h)
        if model.kind == "gcn":
            z = s @ p["W"] + p["b"]
            h = relu(z)
            cache["layers"].append((s, z))
        else:
            z1 = s @ p["W1"] + p["b1"]
            a1 = relu(z1)
            z2 = a1 @ p["W2"] + p["b2"]
            h = relu(z2)
            cache["layers"].append((s, z1, a1, z2))
        cache["hs"].append(h)
    if model.task == "graph":
        if node_mask is None:
            node_mask = np.ones(h.shape[:2])
        count = node_mask.sum(axis=1, keepdims=True)
        pooled = (h * node_mask[..., None]).sum(axis=1) / count
        cache["pool"] = (node_mask, count)
    else:
        pooled = h
    zc = pooled @ model.head["W1"] + model.head["b1"]
    ac = relu(zc)
    drop = None
    if dropout_rng is not None and model.dropout > 0:
        keep = 1.0 - model.dropout
        drop = (dropout_rng.random(ac.shape) < keep) / keep
        ac = ac * drop
    logits = ac @ model.head["W2"] + model.head["b2"]
    cache.update(pooled=pooled, zc=zc, ac=ac, drop=drop)
    return logits, cache


def backward_batch(model: GnnModel, cache, dlogits, want_conn=False, want_params=True):
    """Reverse pass of :func:`forward_batch`.

    Returns ``(param_grads, conn_grad)``; ``conn_grad`` has the shape of the
    connectivity stack (``None`` unless ``want_conn``).
    """
    grads = {}
    head = model.head
    if want_params:
        grads["head.W2"] = _flat(cache["ac"]).T @ _flat(dlogits)
        grads["head.b2"] = _flat(dlogits).sum(axis=0)
    dac = dlogits @ head["W2"].T
    if cache["drop"] is not None:
        dac = dac * cache["drop"]
    dzc = dac * (cache["zc"] > 0)
    if want_params:
        grads["head.W1"] = _flat(cache["pooled"]).T @ _flat(dzc)
        grads["head.b1"] = _flat(dzc).sum(axis=0)
    dpooled = dzc @ head["W1"].T
    if model.task == "graph":
        node_mask, count = cache["pool"]
        dh = dpooled[:, None, :] * (node_mask / count)[..., None]
    else:
        dh = dpooled
    conn = cache["conn"]
    dconn = [None] * model.num_layers if want_conn else None
    for t in reversed(range(model.num_layers)):
        p = model.conv[t]
        h_prev = cache["hs"][t]
        if model.kind == "gcn":
            s, z = cache["layers"][t]
            dz = dh * (z > 0)
            if want_params:
                grads[f"conv{t}.W"] = _flat(s).T @ _flat(dz)
                grads[f"conv{t}.b"] = _flat(dz).sum(axis=0)
            ds = dz @ p["W"].T
        else:
            s, z1, a1, z2 = cache["layers"][t]
            dz2 = dh * (z2 > 0)
            da1 = dz2 @ p["W2"].T
            dz1 = da1 * (z1 > 0)
            if want_params:
                grads[f"conv{t}.W2"] = _flat(a1).T @ _flat(dz2)
                grads[f"conv{t}.b2"] = _flat(dz2).sum(axis=0)
                grads[f"conv{t}.W1"] = _flat(s).T @ _flat(dz1)
                grads[f"conv{t}.b1"] = _flat(dz1).sum(axis=0)
            ds = dz1 @ p["W1"].T
        if want_conn:
            dconn[t] = np.matmul(h_prev, np.swapaxes(ds, 1, 2))
        if t > 0 or want_conn:
            dh = np.matmul(conn[:, t], ds)
    if want_conn:
        dconn = np.stack(dconn, axis=1)
    return grads, dconn


# -- masked forward over one graph ----------------------------------------------


@dataclass
class Prediction:
    logits: np.ndarray
    probabilities: np.ndarray
    predicted_class: int


class MaskedForward:
    """The model restricted to one graph (and one target node for node tasks).

    Masks are vectors over the canonical layer-edge universe of size
    ``|E| * T``; entry ``(t - 1) * E + e`` scales edge ``e`` at layer ``t``.
    """

    def __init__(self, model: GnnModel, graph: Graph, node: int | None = None, coef=None):
        if model.task == "node" and node is None:
            raise ValueError("node-classification models need a target node")
        self.model = model
        self.graph = graph
        self.node = node
        self.num_layers = model.num_layers
        self.coef = (edge_coefficients(graph, model.kind, model.eps)
                     if coef is None else np.asarray(coef, dtype=np.float64))
        self.num_layer_edges = graph.num_edges * model.num_layers
        self._h0 = graph.features.T[None]
        n = graph.num_nodes
        per_row = model.num_layers * n * n + 4 * n * max(model.dims)
        self._chunk = max(1, int(4e6 // per_row))

    @classmethod
    def for_node(cls, model: GnnModel, graph: Graph, node: int) -> "MaskedForward":
        """Explain ``node`` on its ``T``-hop computation subgraph.

        Connectivity values come from the full graph, so the target's output
        is unchanged by the restriction.
        """
        sub, new_node, _, edge_ids = computation_subgraph(graph, node, model.num_layers)
        coef = edge_coefficients(graph, model.kind, model.eps)[edge_ids]
        return cls(model, sub, node=new_node, coef=coef)

    def check_mask(self, masks) -> np.ndarray:
        masks = np.asarray(masks, dtype=np.float64)
        if masks.shape[-1] != self.num_layer_edges:
            raise ValueError(
                f"mask has {masks.shape[-1]} entries, expected {self.num_layer_edges} "
                f"(|E|={self.graph.num_edges} x T={self.num_layers})"
            )
        return masks

    def connectivity(self, masks: np.ndarray) -> np.ndarray:
        b = masks.shape[0]
        e = self.graph.num_edges
        n = self.graph.num_nodes
        vals = masks.reshape(b, self.num_layers, e) * self.coef
        conn = np.zeros((b, self.num_layers, n, n))
        conn[:, :, self.graph.src, self.graph.dst] = vals
        return conn

    def _run(self, masks):
        conn = self.connectivity(masks)
        h0 = np.broadcast_to(self._h0, (masks.shape[0],) + self._h0.shape[1:])
        logits, cache = forward_batch(self.model, conn, h0)
        if self.node is not None:
            logits = logits[:, self.node]
        return logits, cache

    def logits(self, masks=None) -> np.ndarray:
        """Logits for a mask ``(|E| T,)`` or a batch ``(B, |E| T)``; ``None`` is the all-ones mask."""
        if masks is None:
            masks = np.ones(self.num_layer_edges)
        masks = self.check_mask(masks)
        single = masks.ndim == 1
        masks = np.atleast_2d(masks)
        out = [self._run(masks[i:i + self._chunk])[0] for i in range(0, len(masks), self._chunk)]
        out = np.concatenate(out, axis=0)
        return out[0] if single else out

    def probabilities(self, masks=None) -> np.ndarray:
        return softmax(self.logits(masks))

    def predict(self, mask=None) -> Prediction:
        logits = self.logits(np.ones(self.num_layer_edges) if mask is None else mask)
        probs = softmax(logits)
        return Prediction(logits=logits, probabilities=probs, predicted_class=int(np.argmax(probs)))

    def predict_restricted(self, kept) -> Prediction:
        """Prediction with only the layer edges in ``kept`` (ids or a LayerEdgeSet) active."""
        mask = np.zeros(self.num_layer_edges)
        ids = getattr(kept, "ids", kept)
        mask[np.asarray(ids, dtype=np.int64)] = 1.0
        return self.predict(mask)

    def value_and_grad(self, mask, target: int, value: str = "log_prob"):
        """Scalar objective on class ``target`` and its gradient w.r.t. the mask.

        ``value`` is ``"log_prob"``, ``"prob"`` or ``"logit"``.
        """
        mask = self.check_mask(mask).reshape(1, -1)
        logits, cache = self._run(mask)
        lg = logits[0]
        if value == "logit":
            out = lg[target]
            dl = np.zeros_like(lg)
            dl[target] = 1.0
        else:
            p = softmax(lg)
            onehot = np.zeros_like(lg)
            onehot[target] = 1.0
            if value == "log_prob":
                out = np.log(p[target])
                dl = onehot - p
            elif value == "prob":
                out = p[target]
                dl = p[target] * (onehot - p)
            else:
                raise ValueError(f"unknown value {value!r}")
        if self.node is not None:
            full = np.zeros((1, self.graph.num_nodes, lg.size))
            full[0, self.node] = dl
        else:
            full = dl[None]
        _, dconn = backward_batch(self.model, cache, full, want_conn=True, want_params=False)
        g = dconn[0][:, self.graph.src, self.graph.dst] * self.coef
        return float(out), g.reshape(-1)


def grad_wrt_mask(model: GnnModel, graph: Graph, mask, target_class: int,
                  node: int | None = None, value: str = "log_prob"):
    """Gradient of the chosen class objective w.r.t. every layer-edge mask entry."""
    return MaskedForward(model, graph, node).value_and_grad(mask, target_class, value)[1]


def forward(model: GnnModel, graph: Graph, mask=None, node: int | None = None) -> Prediction:
    return MaskedForward(model, graph, node).predict(mask)


def forward_restricted(model: GnnModel, graph: Graph, kept, node: int | None = None) -> Prediction:
    return MaskedForward(model, graph, node).predict_restricted(kept)


# -- training ----------------------------------------------------------------


@dataclass
class TrainConfig:
    epochs: int = 100
    lr: float = 1e-3
    lr_decay: float = 0.5
    decay_epoch: int = 500
    batch_size: int = 32
    seed: int = 0
    log_every: int = 0


@dataclass
class TrainReport:
    best_epoch: int
    train_accuracy: float
    val_accuracy: float
    test_accuracy: float
    history: list = field(default_factory=list)
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "best_epoch": self.best_epoch,
            "seconds": self.seconds,
            "train_accuracy": self.train_accuracy,
            "val_accuracy": self.val_accuracy,
            "test_accuracy": self.test_accuracy,
        }


class _Adam:
    def __init__(self, model: GnnModel, lr: float, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {k: np.zeros_like(v) for k, v in model.parameters()}
        self.v = {k: np.zeros_like(v) for k, v in model.parameters()}
        self.t = 0

    def step(self, model: GnnModel, grads: dict):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for k, p in model.parameters():
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            p -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


class _GraphBatcher:
    """Pads graphs into dense batches with precomputed connectivity."""

    def __init__(self, model: GnnModel, graphs):
        self.model = model
        self.graphs = graphs
        self.conn = []
        for g in graphs:
            c = np.zeros((g.num_nodes, g.num_nodes))
            c[g.src, g.dst] = edge_coefficients(g, model.kind, model.eps)
            self.conn.append(c)

    def batch(self, idx):
        n = max(self.graphs[i].num_nodes for i in idx)
        d = self.graphs[idx[0]].feature_dim
        conn = np.zeros((len(idx), n, n))
        h0 = np.zeros((len(idx), n, d))
        node_mask = np.zeros((len(idx), n))
        for b, i in enumerate(idx):
            g = self.graphs[i]
            conn[b, :g.num_nodes, :g.num_nodes] = self.conn[i]
            h0[b, :g.num_nodes] = g.features.T
            node_mask[b, :g.num_nodes] = 1.0
        t = self.model.num_layers
        conn = np.broadcast_to(conn[:, None], (len(idx), t, n, n))
        labels = np.array([self.graphs[i].label for i in idx], dtype=np.int64)
        return conn, h0, node_mask, labels

    def predict(self, idx, batch_size=256):
        out = []
        for s in range(0, len(idx), batch_size):
            conn, h0, nm, _ = self.batch(idx[s:s + batch_size])
            logits, _ = forward_batch(self.model, conn, h0, nm)
            out.append(np.argmax(logits, axis=-1))
        return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def _xent(logits, labels):
    """Mean cross-entropy and its gradient w.r.t. logits (rows = samples)."""
    lp = log_softmax(logits)
    loss = -lp[np.arange(len(labels)), labels].mean()
    d = np.exp(lp)
    d[np.arange(len(labels)), labels] -= 1.0
    return loss, d / len(labels)


def _accuracy(pred, labels) -> float:
    return float(np.mean(pred == labels)) if len(labels) else float("nan")


def train(model: GnnModel, dataset, config: TrainConfig | None = None):
    """Train with Adam and return ``(best_model, TrainReport)``.

    ``dataset`` provides ``graphs``, ``splits`` (``train``/``val``/``test``
    index arrays) and ``task``. For node tasks the splits index nodes of
    ``graphs[0]``. The returned model is the checkpoint with the best
    validation accuracy (earliest on ties).
    """
    config = config or TrainConfig()
    start = time.perf_counter()
    model = model.copy()
    rng = np.random.default_rng(config.seed)
    opt = _Adam(model, config.lr)
    splits = {k: np.asarray(v, dtype=np.int64) for k, v in dataset.splits.items()}
    if model.task == "graph":
        batcher = _GraphBatcher(model, dataset.graphs)
        labels = np.array([g.label for g in dataset.graphs], dtype=np.int64)
        step = _graph_step(model, batcher, splits["train"], config)

        def evaluate(part):
            idx = splits[part]
            return _accuracy(batcher.predict(idx), labels[idx])
    else:
        step, evaluate = _node_step(model, dataset.graphs[0], splits, config)

    best = (-1.0, -1, model.copy())
    history = []
    for epoch in range(config.epochs):
        if epoch > 0 and config.decay_epoch and epoch % config.decay_epoch == 0:
            opt.lr *= config.lr_decay
        loss = step(rng, opt)
        if not np.isfinite(loss):
            raise NumericalError(f"non-finite training loss {loss} at epoch {epoch}")
        val = evaluate("val")
        history.append((epoch, loss, val))
        if config.log_every and epoch % config.log_every == 0:
            log.info("epoch %d loss %.4f val %.4f", epoch, loss, val)
        if val > best[0]:
            best = (val, epoch, model.copy())
    best_model = best[2]
    model.conv, model.head = best_model.copy().conv, best_model.copy().head
    report = TrainReport(
        best_epoch=best[1],
        train_accuracy=evaluate("train"),
        val_accuracy=evaluate("val"),
        test_accuracy=evaluate("test"),
        history=history,
        seconds=time.perf_counter() - start,
    )
    return best_model, report


def _graph_step(model, batcher, train_idx, config):
    def step(rng, opt):
        order = rng.permutation(train_idx)
        total, count = 0.0, 0
        for s in range(0, len(order), config.batch_size):
            idx = order[s:s + config.batch_size]
            conn, h0, nm, labels = batcher.batch(idx)
            logits, cache = forward_batch(model, conn, h0, nm, dropout_rng=rng)
            loss, dl = _xent(logits, labels)
            if not np.isfinite(loss):
                return loss
            grads, _ = backward_batch(model, cache, dl)
            opt.step(model, grads)
            total += loss * len(idx)
            count += len(idx)
        return total / max(count, 1)
    return step


def _node_step(model, graph, splits, config):
    conn = np.zeros((graph.num_nodes, graph.num_nodes))
    conn[graph.src, graph.dst] = edge_coefficients(graph, model.kind, model.eps)
    conn = np.broadcast_to(conn[None, None], (1, model.num_layers) + conn.shape)
    h0 = graph.features.T[None]
    labels = graph.node_labels
    train_idx = splits["train"]

    def step(rng, opt):
        logits, cache = forward_batch(model, conn, h0, dropout_rng=rng)
        loss, dl_sel = _xent(logits[0, train_idx], labels[train_idx])
        if not np.isfinite(loss):
            return loss
        dl = np.zeros_like(logits)
        dl[0, train_idx] = dl_sel
        grads, _ = backward_batch(model, cache, dl)
        opt.step(model, grads)
        return loss

    def evaluate(part):
        idx = splits[part]
        logits, _ = forward_batch(model, conn, h0)
        return _accuracy(np.argmax(logits[0], axis=-1)[idx], labels[idx])

    return step, evaluate
