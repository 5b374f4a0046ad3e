"""Desk-scale presets: dataset sizes and training settings that run on a laptop CPU."""

from __future__ import annotations

from .datasets import Dataset, gen_ba_infe, gen_ba_lrp, gen_ba_shapes
from .gnn import GnnModel, TrainConfig, TrainReport, init_model, train

DATA_SEED = 7

DATASETS = {
    "ba-lrp": {"num_graphs": 2000, "nodes_per_graph": 20},
    "ba-infe": {"num_graphs": 2000},
    "ba-shapes": {"num_base_nodes": 300, "num_motifs": 80},
}

MODEL = {"hidden": 32, "dropout": 0.0}
# two message-passing layers for node tasks, three for graph tasks
NUM_LAYERS = {"node": 2, "graph": 3}

TRAINING = {
    "ba-lrp": {"epochs": 200, "lr": 3e-3},
    "ba-infe": {"epochs": 1000, "lr": 3e-3},
    "ba-shapes": {"epochs": 1000, "lr": 1e-2},
}


def desk_dataset(name: str, seed: int = DATA_SEED) -> Dataset:
    params = DATASETS[name]
    if name == "ba-lrp":
        return gen_ba_lrp(seed=seed, **params)
    if name == "ba-infe":
        return gen_ba_infe(seed=seed, **params)
    return gen_ba_shapes(seed=seed, **params)


def desk_model(dataset: Dataset, kind: str = "gcn", seed: int = 0) -> tuple[GnnModel, TrainReport]:
    """Train the desk-scale model for ``dataset`` and return ``(model, report)``."""
    model = init_model(kind, dataset.graphs[0].feature_dim, MODEL["hidden"], dataset.num_classes,
                       NUM_LAYERS[dataset.task], task=dataset.task, seed=seed,
                       dropout=MODEL["dropout"])
    cfg = TrainConfig(seed=seed, **TRAINING[dataset.name])
    return train(model, dataset, cfg)
