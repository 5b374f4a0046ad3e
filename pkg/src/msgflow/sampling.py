"""Monte-Carlo marginal contributions over layer-edge permutations.

Each sampling step draws a permutation of all layer edges and removes them
one at a time. Removing the ``j``-th layer edge changes the game value by
``s_j``; that change is split evenly over the flows that first disappear at
that position and stored in column ``j`` of each flow's score vector.

Also provides the exact (subset-enumeration) Shapley value over layer
edges, used as a test oracle on tiny graphs.
"""

from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .flows import FlowIndex
from .gnn import MaskedForward, softmax

DEFAULT_STEPS = 30
EXHAUSTIVE_LIMIT = 10_080
EXACT_PLAYER_LIMIT = 20


class ClassGame:
    """Coalition game over layer edges: value of the target class under a mask.

    ``value`` selects the target-class probability (default) or its logit.
    """

    def __init__(self, forward: MaskedForward, target_class: int | None = None,
                 value: str = "prob"):
        if value not in ("prob", "logit"):
            raise ValueError(f"value must be 'prob' or 'logit', got {value!r}")
        self.forward = forward
        if target_class is None:
            target_class = forward.predict().predicted_class
        self.target_class = int(target_class)
        self.value = value
        self.num_players = forward.num_layer_edges

    def __call__(self, masks) -> np.ndarray:
        logits = self.forward.logits(np.atleast_2d(masks))
        if self.value == "logit":
            return logits[:, self.target_class]
        return softmax(logits)[:, self.target_class]


class AdditiveGame:
    """``v(P) = sum of coefficients of the players in P`` (test stub)."""

    target_class = 0

    def __init__(self, coefficients):
        self.coefficients = np.asarray(coefficients, dtype=np.float64)
        self.num_players = self.coefficients.size

    def __call__(self, masks) -> np.ndarray:
        return np.atleast_2d(masks) @ self.coefficients


@dataclass
class FlowScoreTable:
    """Per-flow, per-position marginal scores.

    ``S[k, j]`` is the average share flow ``k`` received when it was removed at
    permutation position ``j``; ``C[k, j]`` counts those removals. The table
    also keeps, per layer edge, the sum of its own marginals over all steps.
    """

    S: np.ndarray
    C: np.ndarray
    num_steps: int
    seed: int | None
    target_class: int
    edge_marginal_sum: np.ndarray
    value: str = "prob"
    empty_positions: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def num_flows(self) -> int:
        return self.S.shape[0]

    @property
    def num_layer_edges(self) -> int:
        return self.S.shape[1]

    def layer_edge_estimates(self) -> np.ndarray:
        """Mean marginal of each layer edge over the sampled permutations."""
        return self.edge_marginal_sum / self.num_steps

    def to_dict(self) -> dict:
        flows = {}
        for k, j in zip(*np.nonzero(self.C)):
            flows.setdefault(str(k), {})[str(j)] = [float(self.S[k, j]), int(self.C[k, j])]
        return {
            "M": self.num_steps,
            "seed": self.seed,
            "target_class": self.target_class,
            "value": self.value,
            "num_flows": self.num_flows,
            "num_layer_edges": self.num_layer_edges,
            "edge_marginal_sum": self.edge_marginal_sum.tolist(),
            "empty_positions": self.empty_positions,
            "flows": flows,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FlowScoreTable":
        shape = (doc["num_flows"], doc["num_layer_edges"])
        S = np.zeros(shape)
        C = np.zeros(shape, dtype=np.int64)
        for k, row in doc["flows"].items():
            for j, (s, c) in row.items():
                S[int(k), int(j)] = s
                C[int(k), int(j)] = c
        return cls(S=S, C=C, num_steps=doc["M"], seed=doc["seed"],
                   target_class=doc["target_class"],
                   edge_marginal_sum=np.asarray(doc["edge_marginal_sum"], dtype=np.float64),
                   value=doc.get("value", "prob"), empty_positions=doc.get("empty_positions", 0))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "FlowScoreTable":
        return cls.from_dict(json.loads(Path(path).read_text()))


def step_generator(seed: int, step: int) -> np.random.Generator:
    """Independent counter-based (Philox) stream for one sampling step."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(step,))))


def prefix_masks(perm: np.ndarray) -> np.ndarray:
    """Row ``j`` keeps every layer edge except the first ``j`` of ``perm``."""
    a = perm.size
    pos = np.empty(a, dtype=np.int64)
    pos[perm] = np.arange(a)
    return (pos[None, :] >= np.arange(a + 1)[:, None]).astype(np.float64)


def permutation_marginals(game, perm: np.ndarray) -> np.ndarray:
    """``s_j = v(kept before step j) - v(kept after step j)`` along one permutation."""
    f = game(prefix_masks(perm))
    return f[:-1] - f[1:]


def _run_step(game, carriers, perm):
    s = permutation_marginals(game, perm)
    pos = np.empty(perm.size, dtype=np.int64)
    pos[perm] = np.arange(perm.size)
    # a flow disappears with the earliest-removed of its carriers
    removed_at = pos[carriers].min(axis=1) if carriers.size else np.zeros(0, np.int64)
    return perm, s, removed_at


def sample_marginal_contributions(
    game,
    flow_index: FlowIndex,
    num_steps: int = DEFAULT_STEPS,
    seed: int = 0,
    exhaustive: bool = False,
    jobs: int = 1,
) -> FlowScoreTable:
    """Build the flow score table by permutation sampling.

    Parameters
    ----------
    game : ClassGame or callable
        Maps a batch of masks ``(B, |E| T)`` to values ``(B,)``. A
        :class:`~msgflow.gnn.MaskedForward` is wrapped in a
        :class:`ClassGame` on its predicted class.
    flow_index : FlowIndex
    num_steps : int
        Number of random permutations ``M``. Ignored when ``exhaustive``.
    seed : int
        Step ``i`` draws its permutation from ``step_generator(seed, i)``, so
        the result is independent of ``jobs``.
    exhaustive : bool
        Visit every permutation once, in lexicographic order.
    jobs : int
        Worker threads for the per-step forwards; merging is serial and in
        step order.
    """
    if isinstance(game, MaskedForward):
        game = ClassGame(game)
    a = flow_index.num_layer_edges
    if getattr(game, "num_players", a) != a:
        raise ValueError("game and flow index disagree on the number of layer edges")
    if exhaustive:
        if math.factorial(a) > EXHAUSTIVE_LIMIT:
            raise ValueError(f"exhaustive mode needs |A|! <= {EXHAUSTIVE_LIMIT}, |A| = {a}")
        perms = [np.array(p, dtype=np.int64) for p in itertools.permutations(range(a))]
        num_steps = len(perms)
        get_perm = perms.__getitem__
    else:
        if num_steps <= 0:
            raise ValueError("num_steps must be positive")

        def get_perm(i):
            return step_generator(seed, i).permutation(a)

    carriers = flow_index.carriers

    def work(i):
        return _run_step(game, carriers, get_perm(i))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, range(num_steps)))
    else:
        results = map(work, range(num_steps))

    nf = flow_index.num_flows
    S = np.zeros((nf, a))
    C = np.zeros((nf, a), dtype=np.int64)
    edge_sum = np.zeros(a)
    rows = np.arange(nf)
    empty = 0
    for perm, s, removed_at in results:
        edge_sum[perm] += s
        counts = np.bincount(removed_at, minlength=a)
        empty += int(np.count_nonzero(counts == 0))
        share = np.divide(s, counts, out=np.zeros(a), where=counts > 0)
        S[rows, removed_at] += share[removed_at]
        C[rows, removed_at] += 1
    np.divide(S, C, out=S, where=C > 0)
    return FlowScoreTable(
        S=S, C=C, num_steps=num_steps, seed=None if exhaustive else seed,
        target_class=getattr(game, "target_class", 0), edge_marginal_sum=edge_sum,
        value=getattr(game, "value", "custom"), empty_positions=empty,
    )


def flowx_star(table: FlowScoreTable) -> np.ndarray:
    """Sampling-only flow scores: mean of each row of ``S`` over its visited positions.

    Equivalent to a dot product with uniform weights over the positions
    where ``C > 0``. Rows never visited score 0.
    """
    visited = (table.C > 0).sum(axis=1)
    total = np.where(table.C > 0, table.S, 0.0).sum(axis=1)
    return np.divide(total, visited, out=np.zeros(table.num_flows), where=visited > 0)


@dataclass
class ShapleyReport:
    phi: np.ndarray
    full_value: float
    empty_value: float
    target_class: int
    value: str


def shapley_exact(game, max_players: int = EXACT_PLAYER_LIMIT) -> ShapleyReport:
    """Exact Shapley value of every layer edge by enumerating all coalitions.

    ``phi(e) = sum_P |P|! (n-|P|-1)! / n! * (v(P + e) - v(P))`` over
    ``P`` not containing ``e``. Needs ``2^n`` game evaluations.
    """
    if isinstance(game, MaskedForward):
        game = ClassGame(game)
    n = game.num_players
    if n > max_players:
        raise ValueError(
            f"exact Shapley over {n} layer edges needs 2^{n} evaluations; limit is {max_players}"
        )
    codes = np.arange(2 ** n, dtype=np.int64)
    bits = ((codes[:, None] >> np.arange(n)) & 1).astype(np.float64)
    values = np.concatenate([game(bits[i:i + 8192]) for i in range(0, len(codes), 8192)])
    size = bits.sum(axis=1).astype(np.int64)
    weight = np.array([math.factorial(k) * math.factorial(n - k - 1) / math.factorial(n)
                       for k in range(n)])
    phi = np.zeros(n)
    for e in range(n):
        without = codes[(codes >> e) & 1 == 0]
        phi[e] = np.sum(weight[size[without]] * (values[without | (1 << e)] - values[without]))
    return ShapleyReport(phi=phi, full_value=float(values[-1]), empty_value=float(values[0]),
                         target_class=getattr(game, "target_class", 0),
                         value=getattr(game, "value", "custom"))
