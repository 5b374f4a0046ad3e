import csv
import json
import math

import numpy as np
import pytest

from msgflow.evaluation import (SweepResult, accuracy, edge_removal_mask, fidelity, fidelity_drop,
                                flow_to_edge_scores, random_edge_scores, select_topk, sparsity,
                                sparsity_sweep, write_sweep)
from msgflow.flows import enumerate_flows
from msgflow.gnn import MaskedForward, init_model
from msgflow.graph import build_graph, undirected
from msgflow.refine import aggregate_to_layer_edges
from helpers import toy_model
from oracles import random_graph


def logit(p):
    return math.log(p / (1 - p))


@pytest.fixture
def drop_point_three(two_node):
    # mean-pooled output 0.5 with every edge, 0.25 without 0 -> 1: p0 goes 0.8 -> 0.5
    g = build_graph([(0, 1), (1, 0)], np.array([[1.0, 0.0]]))
    return MaskedForward(toy_model(a=4 * logit(0.8), c=-logit(0.8)), g)


def random_forward(rng, seed=0):
    g = random_graph(rng, 6, symmetric=True)
    return MaskedForward(init_model("gcn", 2, 6, 2, 3, seed=seed), g)


class TestSelectTopk:
    def test_single_best(self):
        np.testing.assert_array_equal(select_topk([0.1, 0.9, 0.5], 2 / 3), [0, 1, 0])

    def test_full_sparsity_is_empty(self):
        assert select_topk(np.arange(5.0), 1.0).sum() == 0

    def test_ties_by_index(self):
        np.testing.assert_array_equal(select_topk(np.ones(5), 0.6), [1, 1, 0, 0, 0])

    def test_range_checked(self):
        with pytest.raises(ValueError):
            select_topk([1.0], 1.5)

    def test_achieved_sparsity_close(self, rng):
        for n in (7, 10, 33):
            for s in np.linspace(0, 1, 11):
                m = select_topk(rng.random(n), s)
                achieved = 1 - m.sum() / n
                assert s <= achieved + 1e-12 and achieved - s < 1 / n


class TestSparsity:
    def test_three_of_ten(self):
        m = np.zeros(10)
        m[:3] = 1
        assert sparsity([m]) == pytest.approx(0.7, abs=0)

    def test_all_and_none(self):
        assert sparsity([np.ones(4)]) == 0.0
        assert sparsity([np.zeros(4)]) == 1.0

    def test_complement_of_selection_fraction(self, rng):
        masks = [select_topk(rng.random(9), s) for s in (0.2, 0.5, 0.8)]
        frac = np.mean([m.mean() for m in masks])
        assert sparsity(masks) + frac == pytest.approx(1.0, abs=1e-15)


class TestFidelity:
    def test_empty_selection_is_exactly_zero(self, rng):
        for seed in range(5):
            fwd = random_forward(rng, seed)
            assert fidelity_drop(fwd, np.zeros(fwd.graph.num_edges)) == 0.0

    def test_hand_built_drop(self, drop_point_three):
        fwd = drop_point_three
        sel = np.zeros(4)
        sel[fwd.graph.edge_id(0, 1)] = 1
        assert fwd.probabilities()[0] == pytest.approx(0.8, abs=1e-12)
        assert fidelity([fwd], [sel]) == pytest.approx(0.3, abs=1e-12)

    def test_constant_model(self, rng):
        g = random_graph(rng, 5, symmetric=True)
        m = init_model("gcn", 2, 4, 2, 2, seed=0)
        m.head["W2"][:] = 0.0
        fwd = MaskedForward(m, g)
        assert fidelity_drop(fwd, select_topk(rng.random(g.num_edges), 0.5)) == 0.0

    def test_removal_hits_every_layer(self):
        np.testing.assert_array_equal(edge_removal_mask([1, 0, 0], 2), [0, 1, 1, 0, 1, 1])

    def test_length_mismatch(self, drop_point_three):
        with pytest.raises(ValueError, match="4 edges"):
            fidelity_drop(drop_point_three, np.zeros(3))

    def test_invariant_to_monotone_transform(self, rng):
        fwd = random_forward(rng)
        c = rng.standard_normal(fwd.graph.num_edges)
        for s in (0.5, 0.7, 0.9):
            a = fidelity_drop(fwd, select_topk(c, s))
            b = fidelity_drop(fwd, select_topk(np.exp(3 * c) + 2, s))
            assert a == b


class TestAccuracy:
    def graph(self):
        return build_graph(undirected([(0, 1), (1, 2), (2, 3)]), np.ones((1, 4)),
                           ground_truth=[(0, 1), (1, 2), (2, 3), (0, 0), (1, 1), (2, 2)])

    def test_half_hit(self):
        g = self.graph()
        sel = np.zeros(g.num_edges)
        for u, v in [(1, 0), (2, 3), (1, 1)]:
            sel[g.edge_id(u, v)] = 1
        assert accuracy(sel, g) == 0.5

    def test_exact_ground_truth(self):
        g = self.graph()
        sel = np.zeros(g.num_edges)
        for u, v in g.ground_truth:
            sel[g.edge_id(u, v)] = 1
        assert accuracy(sel, g) == 1.0

    def test_missing_ground_truth(self, two_node):
        with pytest.raises(ValueError):
            accuracy(np.ones(4), two_node)


class TestFlowToEdge:
    def test_single_flow(self, path3):
        idx = enumerate_flows(path3, 2)
        got = flow_to_edge_scores([0.4], idx)
        assert got[path3.edge_id(0, 1)] == got[path3.edge_id(1, 2)] == 0.4
        assert np.count_nonzero(got) == 2

    def test_unit_scores_count_traversals(self, two_node):
        idx = enumerate_flows(two_node, 2)
        got = flow_to_edge_scores(np.ones(idx.num_flows), idx)
        e = two_node.num_edges
        np.testing.assert_array_equal(got, np.bincount(idx.carriers.ravel() % e, minlength=e))

    def test_collapsed_layer_aggregate(self, rng):
        for _ in range(20):
            g = random_graph(rng, int(rng.integers(1, 7)))
            T = int(rng.integers(1, 4))
            idx = enumerate_flows(g, T)
            s = rng.standard_normal(idx.num_flows)
            collapsed = aggregate_to_layer_edges(s, idx).reshape(T, g.num_edges).sum(axis=0)
            np.testing.assert_allclose(flow_to_edge_scores(s, idx), collapsed, atol=1e-12)


class TestSweep:
    def test_constant_model_flat_zero(self, rng):
        g = random_graph(rng, 5, symmetric=True)
        m = init_model("gcn", 2, 4, 2, 2, seed=0)
        m.head["W2"][:] = 0.0
        fwds = [MaskedForward(m, g)] * 3
        res = sparsity_sweep(fwds, lambda i: random_edge_scores(g, i))
        np.testing.assert_array_equal(res.fidelity, 0.0)
        assert res.n_samples == 3

    def test_failures_excluded_and_counted(self, rng):
        fwds = [random_forward(rng, s) for s in range(4)]

        def explainer(i):
            if i == 2:
                raise RuntimeError("boom")
            return random_edge_scores(fwds[i].graph, i)

        res = sparsity_sweep(fwds, explainer, levels=(0.5,))
        assert res.n_samples == 3 and res.failures[0][0] == 2
        keep = [0, 1, 3]
        expected = np.mean([fidelity_drop(fwds[i], select_topk(explainer(i), 0.5)) for i in keep])
        assert res.fidelity[0] == pytest.approx(expected, abs=1e-15)

    def test_threads_match_sequential(self, rng):
        fwds = [random_forward(rng, s) for s in range(5)]
        ex = lambda i: random_edge_scores(fwds[i].graph, i)  # noqa: E731
        a = sparsity_sweep(fwds, ex)
        b = sparsity_sweep(fwds, ex, jobs=3)
        assert a.fidelity == b.fidelity

    def test_accuracy_reported(self):
        g = TestAccuracy().graph()
        fwd = MaskedForward(init_model("gcn", 1, 3, 2, 2, seed=0), g)
        res = sparsity_sweep([fwd], lambda i: np.arange(g.num_edges, 0, -1.0),
                             graphs_for_accuracy=[g])
        expected = accuracy(select_topk(np.arange(g.num_edges, 0, -1.0), 0.9), g)
        assert res.accuracy == expected

    def test_csv_and_summary_agree(self, tmp_path):
        res = [SweepResult("flowx", "d", (0.5, 0.9), [0.4, 0.2], 10, 0),
               SweepResult("random", "d", (0.5, 0.9), [0.1, 0.05], 10, 0, accuracy=0.25)]
        write_sweep(res, tmp_path / "s.csv", tmp_path / "s.json")
        rows = list(csv.DictReader(open(tmp_path / "s.csv")))
        summary = json.loads((tmp_path / "s.json").read_text())
        assert len(rows) == 4
        for name in ("flowx", "random"):
            fids = [float(r["fidelity"]) for r in rows if r["method"] == name]
            assert summary[name]["mean_fidelity"] == pytest.approx(np.mean(fids))
        assert summary["random"]["accuracy_at_0.9"] == 0.25
        assert "accuracy_at_0.9" not in summary["flowx"]
