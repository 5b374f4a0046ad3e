"""Trainable refinement of flow scores.

Flow scores are ``s = S w`` for a weight vector ``w`` over removal
positions shared by all flows of a graph. Summing flow scores over each
layer edge's flows gives layer-edge scores, which an exponential
redistribution (min-max, ``x**r``, min-max) turns into a soft mask ``M``.
Training lowers the log-probability of the originally predicted class
under the complementary mask ``1 - M``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .flows import FlowIndex
from .gnn import MaskedForward, NumericalError
from .sampling import FlowScoreTable

log = logging.getLogger(__name__)


@dataclass
class RefinerConfig:
    learning_rate: float = 0.3
    iterations: int = 500
    r: float = 8.0
    init_mode: str = "uniform_low"
    init_range: tuple = (0.0, 0.1)
    noise_scale: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("r must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.init_mode not in ("uniform_low", "half_noise"):
            raise ValueError(f"unknown init_mode {self.init_mode!r}")

    def initial_weights(self, size: int) -> np.ndarray:
        rng = np.random.default_rng(self.seed)
        if self.init_mode == "uniform_low":
            lo, hi = self.init_range
            return rng.uniform(lo, hi, size=size)
        return 0.5 + self.noise_scale * rng.standard_normal(size)


@dataclass
class ExplanationResult:
    """Scores at flow, layer-edge and input-edge granularity.

    ``selection_mask`` is filled by the evaluation code for a chosen sparsity.
    """

    method: str
    target_class: int
    flow_scores: np.ndarray | None = None
    layer_edge_scores: np.ndarray | None = None
    input_edge_scores: np.ndarray | None = None
    selection_mask: np.ndarray | None = None
    weights: np.ndarray | None = None
    trace: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def contribution(self) -> np.ndarray:
        """Scores of the explanation targets used by the metrics (input edges)."""
        return self.input_edge_scores


def score_flows(S, w) -> np.ndarray:
    """Flow scores ``S @ w``."""
    S = getattr(S, "S", S)
    w = np.asarray(w, dtype=np.float64)
    if S.shape[1] != w.shape[0]:
        raise ValueError(f"weight vector has {w.shape[0]} entries, table has {S.shape[1]} columns")
    return S @ w


def aggregate_to_layer_edges(flow_scores, flow_index: FlowIndex) -> np.ndarray:
    """Sum the scores of all flows carried by each layer edge."""
    flow_scores = np.asarray(flow_scores, dtype=np.float64)
    t = flow_index.num_layers
    return np.bincount(flow_index.carriers.ravel(), weights=np.repeat(flow_scores, t),
                       minlength=flow_index.num_layer_edges)


def _gather_to_flows(grad_layer_edges, flow_index: FlowIndex) -> np.ndarray:
    """Adjoint of :func:`aggregate_to_layer_edges`."""
    return grad_layer_edges[flow_index.carriers].sum(axis=1)


def minmax(x: np.ndarray):
    """Affine map of ``x`` onto ``[0, 1]``; a constant vector maps to 0.5.

    Returns ``(y, cache)`` for :func:`minmax_backward`.
    """
    x = np.asarray(x, dtype=np.float64)
    imin, imax = int(np.argmin(x)), int(np.argmax(x))
    span = x[imax] - x[imin]
    if span == 0:
        return np.full_like(x, 0.5), (imin, imax, span, None)
    y = (x - x[imin]) / span
    return y, (imin, imax, span, y)


def minmax_backward(gy: np.ndarray, cache) -> np.ndarray:
    # gradient through min/max goes to the first attaining index
    imin, imax, span, y = cache
    if span == 0:
        return np.zeros_like(gy)
    gx = gy / span
    gx[imin] += np.dot(gy, y - 1.0) / span
    gx[imax] -= np.dot(gy, y) / span
    return gx


def exponential_redistribution(s_hat, r: float) -> np.ndarray:
    """Normalize to ``[0, 1]``, raise to the power ``r``, normalize again."""
    y, _ = minmax(s_hat)
    z, _ = minmax(y ** r)
    return z


class RefinementObjective:
    """Loss ``log p_y(1 - M)`` as a function of either ``w`` or raw flow scores."""

    def __init__(self, forward: MaskedForward, flow_index: FlowIndex, target_class: int,
                 r: float = 8.0, S=None):
        self.forward = forward
        self.flow_index = flow_index
        self.target = int(target_class)
        self.r = r
        if S is not None:
            S = getattr(S, "S", S)
            self.active = np.flatnonzero(np.any(S != 0, axis=1))
            self.S_active = S[self.active]
        self.degenerate = 0

    def _from_flow_scores(self, s):
        flow_index = self.flow_index
        s_hat = aggregate_to_layer_edges(s, flow_index)
        y1, c1 = minmax(s_hat)
        if self.r != 1:
            z = y1 ** self.r
            m, c2 = minmax(z)
        else:
            m, c2 = y1, None
        if c2 is not None and c2[2] == 0 or c1[2] == 0:
            self.degenerate += 1
        loss, g_mask = self.forward.value_and_grad(1.0 - m, self.target, "log_prob")
        gm = -g_mask
        if c2 is not None:
            gz = minmax_backward(gm, c2)
            gy1 = gz * self.r * y1 ** (self.r - 1)
        else:
            gy1 = gm
        g_s_hat = minmax_backward(gy1, c1)
        return loss, _gather_to_flows(g_s_hat, flow_index), m

    def flow_scores(self, w) -> np.ndarray:
        s = np.zeros(self.flow_index.num_flows)
        s[self.active] = self.S_active @ w
        return s

    def loss_and_grad_w(self, w):
        """``(loss, dloss/dw, mask)`` for the position-weight vector."""
        loss, g_s, m = self._from_flow_scores(self.flow_scores(w))
        return loss, self.S_active.T @ g_s[self.active], m

    def loss_and_grad_scores(self, s):
        """``(loss, dloss/ds, mask)`` for free per-flow scores."""
        return self._from_flow_scores(np.asarray(s, dtype=np.float64))


def _descend(objective_fn, x, config: RefinerConfig, trace: list | None):
    lr = config.learning_rate
    for it in range(config.iterations):
        loss, grad, _ = objective_fn(x)
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise NumericalError(
                f"non-finite refinement loss at iteration {it} (|w| = {np.linalg.norm(x):.6g})"
            )
        if trace is not None:
            trace.append({"iter": it, "loss": loss, "masked_prob_y": float(np.exp(loss)),
                          "w_norm": float(np.linalg.norm(x))})
        x = x - lr * grad
    return x


def train_refiner(
    forward: MaskedForward,
    table: FlowScoreTable,
    flow_index: FlowIndex,
    config: RefinerConfig | None = None,
    keep_trace: bool = False,
    target_class: int | None = None,
):
    """Learn the position-weight vector and return ``(w, ExplanationResult)``.

    The target class defaults to the model's prediction on the full graph.
    """
    config = config or RefinerConfig()
    if target_class is None:
        target_class = forward.predict().predicted_class
    objective = RefinementObjective(forward, flow_index, target_class, config.r, table)
    w = config.initial_weights(table.num_layer_edges)
    trace = [] if keep_trace else None
    w = _descend(objective.loss_and_grad_w, w, config, trace)
    if objective.degenerate:
        log.warning("constant layer-edge mask in %d refinement iterations", objective.degenerate)
    scores = score_flows(table.S, w)
    result = ExplanationResult(
        method="flowx",
        target_class=int(target_class),
        flow_scores=scores,
        layer_edge_scores=aggregate_to_layer_edges(scores, flow_index),
        weights=w,
        trace=trace or [],
        metadata={"config": _config_dict(config), "mc_steps": table.num_steps,
                  "mc_seed": table.seed},
    )
    return w, result


def flowx_dagger(
    forward: MaskedForward,
    flow_index: FlowIndex,
    config: RefinerConfig | None = None,
    keep_trace: bool = False,
    target_class: int | None = None,
) -> ExplanationResult:
    """Learning-only ablation: free per-flow scores, random init, no power stage."""
    config = config or RefinerConfig()
    if target_class is None:
        target_class = forward.predict().predicted_class
    objective = RefinementObjective(forward, flow_index, target_class, r=1.0)
    s = config.initial_weights(flow_index.num_flows)
    trace = [] if keep_trace else None
    s = _descend(objective.loss_and_grad_scores, s, config, trace)
    return ExplanationResult(
        method="flowx-dagger",
        target_class=int(target_class),
        flow_scores=s,
        layer_edge_scores=aggregate_to_layer_edges(s, flow_index),
        trace=trace or [],
        metadata={"config": _config_dict(config)},
    )


def _config_dict(config: RefinerConfig) -> dict:
    return {"learning_rate": config.learning_rate, "iterations": config.iterations,
            "r": config.r, "init_mode": config.init_mode,
            "init_range": list(config.init_range), "noise_scale": config.noise_scale,
            "seed": config.seed}


def write_trace(trace: list, path) -> None:
    """Per-iteration CSV: ``iter, loss, masked_prob_y, w_norm``."""
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["iter", "loss", "masked_prob_y", "w_norm"])
        writer.writeheader()
        writer.writerows(trace)
