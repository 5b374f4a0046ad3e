"""Fidelity, Sparsity and Accuracy over input-edge explanations."""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .flows import FlowIndex
from .gnn import MaskedForward
from .graph import Graph

log = logging.getLogger(__name__)

DEFAULT_LEVELS = (0.5, 0.6, 0.7, 0.8, 0.9)
DEFAULT_SAMPLES = 100


def flow_to_edge_scores(flow_scores, flow_index: FlowIndex) -> np.ndarray:
    """Score of each input edge: summed scores of flows through it, counted per layer.

    A flow crossing the same edge at two layers contributes twice.
    """
    flow_scores = np.asarray(flow_scores, dtype=np.float64)
    e = flow_index.graph.num_edges
    edge_of_carrier = flow_index.carriers % e
    t = flow_index.num_layers
    return np.bincount(edge_of_carrier.ravel(), weights=np.repeat(flow_scores, t), minlength=e)


def select_topk(scores, sparsity: float) -> np.ndarray:
    """Binary mask selecting the ``floor((1 - sparsity) * n)`` highest scores.

    Ties go to the lower index.
    """
    if not 0.0 <= sparsity <= 1.0:
        raise ValueError(f"sparsity must be in [0, 1], got {sparsity}")
    scores = np.asarray(scores, dtype=np.float64)
    k = int(np.floor((1.0 - sparsity) * scores.size + 1e-9))
    mask = np.zeros(scores.size)
    mask[np.argsort(-scores, kind="stable")[:k]] = 1.0
    return mask


def edge_removal_mask(selected, num_layers: int) -> np.ndarray:
    """Layer-edge mask that drops the selected input edges at every layer."""
    return np.tile(1.0 - np.asarray(selected, dtype=np.float64), num_layers)


def fidelity_drop(forward: MaskedForward, selected, target_class: int | None = None) -> float:
    """Drop of the predicted-class probability when the selected edges are removed."""
    selected = np.asarray(selected, dtype=np.float64)
    if selected.size != forward.graph.num_edges:
        raise ValueError(
            f"selection has {selected.size} entries, graph has {forward.graph.num_edges} edges"
        )
    full = forward.probabilities()
    if target_class is None:
        target_class = int(np.argmax(full))
    masked = forward.probabilities(edge_removal_mask(selected, forward.num_layers)[None])[0]
    return float(full[target_class] - masked[target_class])


def fidelity(forwards: Sequence[MaskedForward], selections: Sequence) -> float:
    """Mean predicted-class probability drop over samples."""
    if len(forwards) != len(selections):
        raise ValueError("one selection per sample is required")
    return float(np.mean([fidelity_drop(f, m) for f, m in zip(forwards, selections)]))


def sparsity(selections: Sequence) -> float:
    """Mean fraction of explanation targets left unselected."""
    return float(np.mean([1.0 - np.sum(m) / np.size(m) for m in selections]))


def accuracy(selected, graph: Graph) -> float:
    """Fraction of ground-truth elements hit by the selected edges.

    An undirected ground-truth edge is hit when either direction is
    selected; a self-loop when the loop edge is selected.
    """
    if not graph.ground_truth:
        raise ValueError("graph has no ground-truth elements")
    selected = np.asarray(selected) > 0
    chosen = {tuple(e) for e in graph.edges[selected].tolist()}
    hits = sum(1 for u, v in graph.ground_truth if (u, v) in chosen or (v, u) in chosen)
    return hits / len(graph.ground_truth)


def random_edge_scores(graph: Graph, seed: int) -> np.ndarray:
    """Baseline explainer: i.i.d. uniform edge scores."""
    return np.random.default_rng(seed).random(graph.num_edges)


@dataclass
class SweepResult:
    method: str
    dataset: str
    levels: tuple
    fidelity: list
    n_samples: int
    seed: int
    failures: list = field(default_factory=list)
    accuracy: float | None = None
    seconds: float = 0.0

    @property
    def mean_fidelity(self) -> float:
        return float(np.mean(self.fidelity))

    def rows(self) -> list[dict]:
        return [{"method": self.method, "dataset": self.dataset, "sparsity": lvl,
                 "fidelity": fid, "n_samples": self.n_samples, "seed": self.seed}
                for lvl, fid in zip(self.levels, self.fidelity)]

    def summary(self) -> dict:
        doc = {"method": self.method, "dataset": self.dataset, "levels": list(self.levels),
               "fidelity": list(self.fidelity), "mean_fidelity": self.mean_fidelity,
               "n_samples": self.n_samples, "seed": self.seed, "failures": len(self.failures)}
        if self.accuracy is not None:
            doc["accuracy_at_0.9"] = self.accuracy
        return doc


def sparsity_sweep(
    forwards: Sequence[MaskedForward],
    explainer: Callable[[int], np.ndarray],
    levels: Sequence[float] = DEFAULT_LEVELS,
    method: str = "",
    dataset: str = "",
    seed: int = 0,
    graphs_for_accuracy: Sequence[Graph] | None = None,
    jobs: int = 1,
) -> SweepResult:
    """Fidelity at each sparsity level, averaged over samples.

    ``explainer(i)`` returns input-edge scores for sample ``i``. A sample
    whose explainer raises is logged, excluded, and counted in ``failures``.
    When ``graphs_for_accuracy`` is given, the mean ground-truth accuracy at
    sparsity 0.9 is reported too. Samples are explained on up to ``jobs``
    threads; results are consumed in sample order.
    """
    def run(i):
        try:
            return explainer(i), None
        except Exception as exc:  # noqa: BLE001 - sample is reported, not fatal
            return None, exc

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(run, range(len(forwards))))
    else:
        outcomes = map(run, range(len(forwards)))
    drops = {lvl: [] for lvl in levels}
    accs = []
    failures = []
    for i, (scores, exc) in enumerate(outcomes):
        fwd = forwards[i]
        if exc is not None:
            log.warning("explainer failed on sample %d: %s", i, exc)
            failures.append((i, repr(exc)))
            continue
        for lvl in levels:
            drops[lvl].append(fidelity_drop(fwd, select_topk(scores, lvl)))
        if graphs_for_accuracy is not None:
            accs.append(accuracy(select_topk(scores, 0.9), graphs_for_accuracy[i]))
    n = len(forwards) - len(failures)
    fids = [float(np.mean(drops[lvl])) if n else float("nan") for lvl in levels]
    return SweepResult(method=method, dataset=dataset, levels=tuple(levels), fidelity=fids,
                       n_samples=n, seed=seed, failures=failures,
                       accuracy=float(np.mean(accs)) if accs else None)


SWEEP_FIELDS = ["method", "dataset", "sparsity", "fidelity", "n_samples", "seed"]


def write_sweep(results: Sequence[SweepResult], csv_path, summary_path=None) -> None:
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_FIELDS)
        writer.writeheader()
        for res in results:
            writer.writerows(res.rows())
    if summary_path is not None:
        doc = {res.method: res.summary() for res in results}
        Path(summary_path).write_text(json.dumps(doc, indent=1, sort_keys=True))
