"""End-to-end explanation of one prediction, and method sweeps over a dataset.

``explain`` enumerates flows, samples the flow score table, optionally
refines it, and converts flow scores to layer-edge and input-edge scores.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .datasets import Dataset
from .evaluation import (DEFAULT_LEVELS, DEFAULT_SAMPLES, SweepResult, flow_to_edge_scores,
                         random_edge_scores, sparsity_sweep)
from .flows import DEFAULT_FLOW_CAP, FlowIndex, enumerate_flows
from .gnn import GnnModel, MaskedForward
from .graph import Graph
from .refine import (ExplanationResult, RefinerConfig, aggregate_to_layer_edges, flowx_dagger,
                     train_refiner)
from .sampling import DEFAULT_STEPS, ClassGame, FlowScoreTable, flowx_star, \
    sample_marginal_contributions

METHODS = ("flowx", "flowx-star", "flowx-dagger", "random")

log = logging.getLogger(__name__)


@dataclass
class ExplainConfig:
    mc_steps: int = DEFAULT_STEPS
    seed: int = 0
    refiner: RefinerConfig = field(default_factory=RefinerConfig)
    jobs: int = 1
    flow_cap: int = DEFAULT_FLOW_CAP
    value: str = "prob"
    keep_trace: bool = False


@dataclass
class Explanation:
    result: ExplanationResult
    forward: MaskedForward
    flow_index: FlowIndex | None
    table: FlowScoreTable | None
    seconds: float

    def to_dict(self) -> dict:
        return explanation_to_dict(self.result, self.forward, self.flow_index)


def make_forward(model: GnnModel, graph: Graph, node: int | None = None) -> MaskedForward:
    if model.task == "node":
        if node is None:
            raise ValueError("node-classification models need a target node")
        return MaskedForward.for_node(model, graph, node)
    return MaskedForward(model, graph)


def explain(model: GnnModel, graph: Graph, method: str = "flowx", config: ExplainConfig | None = None,
            node: int | None = None, table: FlowScoreTable | None = None) -> Explanation:
    """Explain the model's prediction on ``graph`` (or on ``node`` for node tasks).

    A precomputed ``table`` is reused instead of resampling.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    config = config or ExplainConfig()
    start = time.perf_counter()
    forward = make_forward(model, graph, node)
    target = forward.predict().predicted_class
    flow_index = None
    if method == "random":
        result = ExplanationResult(method="random", target_class=target,
                                   input_edge_scores=random_edge_scores(forward.graph, config.seed),
                                   metadata={"seed": config.seed})
        return Explanation(result, forward, None, None, time.perf_counter() - start)

    flow_index = enumerate_flows(forward.graph, model.num_layers, config.flow_cap, target=forward.node)
    if method in ("flowx", "flowx-star") and table is None:
        game = ClassGame(forward, target, config.value)
        table = sample_marginal_contributions(game, flow_index, config.mc_steps, config.seed,
                                              jobs=config.jobs)
    if table is not None and table.S.shape != (flow_index.num_flows, flow_index.num_layer_edges):
        raise ValueError("flow score table does not match this graph's flows")
    if method == "flowx-star":
        scores = flowx_star(table)
        result = ExplanationResult(method="flowx-star", target_class=target, flow_scores=scores,
                                   layer_edge_scores=aggregate_to_layer_edges(scores, flow_index),
                                   metadata={"mc_steps": table.num_steps, "mc_seed": table.seed})
    elif method == "flowx":
        _, result = train_refiner(forward, table, flow_index, config.refiner,
                                  keep_trace=config.keep_trace, target_class=target)
    else:
        result = flowx_dagger(forward, flow_index, config.refiner, keep_trace=config.keep_trace,
                              target_class=target)
        table = None
    result.input_edge_scores = flow_to_edge_scores(result.flow_scores, flow_index)
    return Explanation(result, forward, flow_index, table, time.perf_counter() - start)


def explanation_to_dict(result: ExplanationResult, forward: MaskedForward,
                        flow_index: FlowIndex | None) -> dict:
    graph = forward.graph
    doc = {"method": result.method, "target_class": result.target_class,
           "node": forward.node, "metadata": result.metadata}
    if result.flow_scores is not None:
        doc["flows"] = flow_index.export(result.flow_scores)
    if result.layer_edge_scores is not None:
        e = graph.num_edges
        doc["layer_edges"] = [
            {"layer": i // e + 1, "src": int(graph.src[i % e]), "dst": int(graph.dst[i % e]),
             "score": float(s)}
            for i, s in enumerate(result.layer_edge_scores)
        ]
    if result.weights is not None:
        doc["weights"] = np.asarray(result.weights).tolist()
    doc["edges"] = [{"src": int(u), "dst": int(v), "score": float(s)}
                    for (u, v), s in zip(graph.edges.tolist(), result.input_edge_scores)]
    return doc


def dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True)


def sample_indices(dataset: Dataset, split: str, n: int, seed: int) -> np.ndarray:
    """Sorted random sample of ``n`` items from a split.

    For node tasks only motif nodes (label > 0) are eligible, since they
    carry ground truth.
    """
    pool = np.asarray(dataset.splits[split])
    if dataset.task == "node" and dataset.graphs[0].node_labels is not None:
        pool = pool[dataset.graphs[0].node_labels[pool] > 0]
    n = min(n, len(pool))
    return np.sort(np.random.default_rng(seed).choice(pool, size=n, replace=False))


def sweep_methods(model: GnnModel, dataset: Dataset, methods, config: ExplainConfig | None = None,
                  levels=DEFAULT_LEVELS, samples: int = DEFAULT_SAMPLES, split: str = "test",
                  seed: int = 0, jobs: int = 1) -> list[SweepResult]:
    """Fidelity curves of several methods on the same dataset sample.

    Sample ``i`` is explained with seed ``seed + i``. Flow score tables are
    computed once per sample and shared by the methods that use them, so
    the first such method in ``methods`` carries the sampling cost.
    Samples run on ``jobs`` threads; each explanation itself is sequential.
    """
    config = config or ExplainConfig()
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    idx = sample_indices(dataset, split, samples, seed)
    if dataset.task == "node":
        items = [(dataset.graphs[0], int(i)) for i in idx]
    else:
        items = [(dataset.graphs[int(i)], None) for i in idx]
    forwards = [make_forward(model, g, node) for g, node in items]
    truth = [g for g, _ in items] if all(g.ground_truth for g, _ in items) else None
    tables: dict = {}
    results = []
    for method in methods:
        def explainer(i, method=method):
            g, node = items[i]
            c = ExplainConfig(mc_steps=config.mc_steps, seed=seed + i, refiner=config.refiner,
                              flow_cap=config.flow_cap, value=config.value)
            ex = explain(model, g, method, c, node=node, table=tables.get(i))
            if ex.table is not None:
                tables[i] = ex.table
            return ex.result.input_edge_scores

        start = time.perf_counter()
        res = sparsity_sweep(forwards, explainer, levels, method=method, dataset=dataset.name,
                             seed=seed, graphs_for_accuracy=truth, jobs=jobs)
        res.seconds = time.perf_counter() - start
        log.info("%s: mean fidelity %.4f over %d samples (%.1f s, %d failures)", method,
                 res.mean_fidelity, res.n_samples, res.seconds, len(res.failures))
        results.append(res)
    return results
