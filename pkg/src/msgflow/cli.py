"""Command line interface: ``msgflow {gen,train,explain,sweep,oracle}``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.

Every option can also come from an INI file given with ``--config``; keys
in the ``[msgflow]`` section apply to all commands, keys in a section named
after the command apply to that command only. Flags given on the command
line win over the file. Relative dataset directories resolve under
``$MSGFLOW_DATA_ROOT`` when that variable is set.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import desk
from .datasets import GENERATORS, Dataset
from .evaluation import DEFAULT_LEVELS, DEFAULT_SAMPLES, write_sweep
from .explain import METHODS, ExplainConfig, explain, make_forward, sweep_methods
from .flows import DEFAULT_FLOW_CAP, FlowOverflowError, enumerate_flows
from .gnn import GnnModel, NumericalError, TrainConfig, init_model, train
from .graph import Graph, GraphError
from .refine import RefinerConfig, write_trace
from .sampling import (EXACT_PLAYER_LIMIT, EXHAUSTIVE_LIMIT, AdditiveGame, ClassGame,
                       FlowScoreTable, sample_marginal_contributions, shapley_exact)

log = logging.getLogger("msgflow")

DATA_ROOT_ENV = "MSGFLOW_DATA_ROOT"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


def data_path(path: str) -> Path:
    p = Path(path)
    root = os.environ.get(DATA_ROOT_ENV)
    if root and not p.is_absolute():
        return Path(root) / p
    return p


def _write_json(doc, path) -> None:
    text = json.dumps(doc, indent=1, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


# -- commands ----------------------------------------------------------------


def cmd_gen(args) -> int:
    """Generate a synthetic dataset directory."""
    name = args.dataset
    if name == "ba-shapes":
        ds = GENERATORS[name](num_base_nodes=args.base_nodes, num_motifs=args.motifs,
                              seed=args.seed, attach_m=args.attach_m)
    elif name == "ba-lrp":
        ds = GENERATORS[name](num_graphs=args.graphs, nodes_per_graph=args.nodes or 20,
                              seed=args.seed)
    else:
        ds = GENERATORS[name](num_graphs=args.graphs, seed=args.seed, max_nodes=args.nodes or 39)
    out = data_path(args.out)
    ds.save(out, force=args.force)
    print(f"wrote {len(ds)} graph(s) to {out}", file=sys.stderr)
    return EXIT_OK


def cmd_train(args) -> int:
    """Train a GNN on a dataset directory; write checkpoint and metrics JSON."""
    ds = Dataset.load(data_path(args.dataset_dir))
    preset = desk.TRAINING.get(ds.name, {})
    epochs = args.epochs if args.epochs is not None else preset.get("epochs", 100)
    lr = args.lr if args.lr is not None else preset.get("lr", 1e-3)
    num_layers = args.num_layers or desk.NUM_LAYERS[ds.task]
    model = init_model(args.layers, ds.graphs[0].feature_dim, args.hidden, ds.num_classes,
                       num_layers, task=ds.task, seed=args.seed, dropout=args.dropout)
    cfg = TrainConfig(epochs=epochs, lr=lr, lr_decay=args.lr_decay, decay_epoch=args.decay_epoch,
                      batch_size=args.batch_size, seed=args.seed)
    start = time.perf_counter()
    best, report = train(model, ds, cfg)
    print(f"trained in {time.perf_counter() - start:.2f} s", file=sys.stderr)
    best.save(args.out)
    metrics = report.to_dict()
    metrics.update(dataset=ds.name, layer_kind=args.layers, hidden=args.hidden,
                   num_layers=num_layers, epochs=epochs, lr=lr, seed=args.seed)
    metrics_path = args.metrics or str(Path(args.out).with_suffix("")) + ".metrics.json"
    _write_json(metrics, metrics_path)
    print(f"test accuracy {report.test_accuracy:.4f}", file=sys.stderr)
    return EXIT_OK


def _explain_config(args) -> ExplainConfig:
    refiner = RefinerConfig(learning_rate=args.refine_lr, iterations=args.iterations, r=args.r,
                            init_mode=args.init_mode, seed=args.seed)
    return ExplainConfig(mc_steps=args.mc_steps, seed=args.seed, refiner=refiner,
                         jobs=args.jobs, flow_cap=args.flow_cap, value=args.value)


def cmd_explain(args) -> int:
    """Explain one prediction and write the explanation JSON."""
    model = GnnModel.load(args.checkpoint)
    graph = Graph.load(args.graph)
    if model.task == "node" and args.node is None:
        raise UsageError("node-classification checkpoints need --node")
    table = None
    if args.table and Path(args.table).is_file():
        table = FlowScoreTable.load(args.table)
    cfg = _explain_config(args)
    cfg.keep_trace = bool(args.trace)
    ex = explain(model, graph, args.method, cfg, node=args.node, table=table)
    if args.table and table is None and ex.table is not None:
        ex.table.save(args.table)
    if args.trace and ex.result.trace:
        write_trace(ex.result.trace, args.trace)
    print(f"{args.method}: {ex.seconds:.3f} s", file=sys.stderr)
    _write_json(ex.to_dict(), args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    """Fidelity-vs-sparsity curves for several methods over a dataset sample."""
    model = GnnModel.load(args.checkpoint)
    ds = Dataset.load(data_path(args.dataset_dir))
    methods = [m for m in args.methods.split(",") if m]
    for m in methods:
        if m not in METHODS:
            raise UsageError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    results = sweep_methods(model, ds, methods, _explain_config(args), tuple(_floats(args.levels)),
                            args.samples, args.split, args.seed, args.jobs)
    for res in results:
        print(f"{res.method}: mean fidelity {res.mean_fidelity:.4f} over {res.n_samples} samples "
              f"({res.seconds:.1f} s, {len(res.failures)} failures)", file=sys.stderr)
    summary = args.summary or str(Path(args.out).with_suffix("")) + ".summary.json"
    write_sweep(results, args.out, summary)
    return EXIT_OK


def cmd_oracle(args) -> int:
    """Exact Shapley values on a tiny graph, checked against exhaustive sampling."""
    graph = Graph.load(args.graph)
    if args.additive is not None:
        num_layers = args.num_layers
        coeffs = _floats(args.additive)
        if len(coeffs) != graph.num_edges * num_layers:
            raise UsageError(f"--additive needs {graph.num_edges * num_layers} coefficients")
        game = AdditiveGame(coeffs)
        node = None
    elif args.checkpoint:
        model = GnnModel.load(args.checkpoint)
        forward = make_forward(model, graph, args.node)
        graph, node, num_layers = forward.graph, forward.node, model.num_layers
        game = ClassGame(forward, value=args.value)
    else:
        raise UsageError("oracle needs --checkpoint or --additive")
    players = graph.num_edges * num_layers
    if players > args.max_players:
        raise ValueError(f"exact Shapley over {players} layer edges needs 2^{players} "
                         f"evaluations; limit is {args.max_players}")
    exact = shapley_exact(game, max_players=args.max_players)
    report = {"num_layer_edges": players, "phi": exact.phi.tolist(),
              "full_value": exact.full_value, "empty_value": exact.empty_value,
              "efficiency_gap": abs(exact.phi.sum() - (exact.full_value - exact.empty_value))}
    flows = enumerate_flows(graph, num_layers, target=node)
    exhaustive = math.factorial(players) <= EXHAUSTIVE_LIMIT
    table = sample_marginal_contributions(game, flows, num_steps=args.mc_steps, seed=args.seed,
                                          exhaustive=exhaustive)
    diff = float(np.max(np.abs(table.layer_edge_estimates() - exact.phi)))
    report.update(mode="exhaustive" if exhaustive else "sampled", num_steps=table.num_steps,
                  max_abs_diff=diff)
    passed = diff < args.tol if exhaustive else True
    report["passed"] = passed
    _write_json(report, args.out)
    print(f"max |sampled - exact| = {diff:.3e} ({report['mode']}, {table.num_steps} steps)",
          file=sys.stderr)
    return EXIT_OK if passed else EXIT_NUMERIC


# -- parser ------------------------------------------------------------------


def _add_explain_options(p) -> None:
    p.add_argument("--mc-steps", type=int, default=30, help="sampling steps M")
    p.add_argument("--refine-lr", type=float, default=0.3)
    p.add_argument("--iterations", type=int, default=500)
    p.add_argument("--r", type=float, default=8.0, help="exponential redistribution power")
    p.add_argument("--init-mode", choices=("uniform_low", "half_noise"), default="uniform_low")
    p.add_argument("--flow-cap", type=int, default=DEFAULT_FLOW_CAP)
    p.add_argument("--value", choices=("prob", "logit"), default="prob")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="msgflow", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="INI file with default option values")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=1, help="worker threads")
        p.add_argument("--config", default=argparse.SUPPRESS, help=argparse.SUPPRESS)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("dataset", choices=sorted(GENERATORS))
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--graphs", type=int, default=2000)
    p.add_argument("--nodes", type=int, default=None,
                   help="nodes per graph (ba-lrp, default 20) or node cap (ba-infe, default 39)")
    p.add_argument("--base-nodes", type=int, default=300)
    p.add_argument("--motifs", type=int, default=80)
    p.add_argument("--attach-m", type=int, default=5)
    p.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")
    common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a GNN classifier")
    p.add_argument("dataset_dir")
    p.add_argument("-o", "--out", required=True, help="checkpoint path")
    p.add_argument("--metrics", help="metrics JSON path (default: next to the checkpoint)")
    p.add_argument("--layers", choices=("gcn", "gin"), default="gcn")
    p.add_argument("--hidden", type=int, default=desk.MODEL["hidden"])
    p.add_argument("--num-layers", type=int, default=None,
                   help="message-passing layers (default 2 for node tasks, 3 for graph tasks)")
    p.add_argument("--dropout", type=float, default=desk.MODEL["dropout"])
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--lr-decay", type=float, default=0.5)
    p.add_argument("--decay-epoch", type=int, default=500)
    p.add_argument("--batch-size", type=int, default=32)
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("explain", help="explain one prediction")
    p.add_argument("checkpoint")
    p.add_argument("graph", help="graph JSON file")
    p.add_argument("--method", choices=METHODS, default="flowx")
    p.add_argument("--node", type=int, default=None, help="target node (node tasks)")
    p.add_argument("--table", help="flow score table: reused if it exists, written otherwise")
    p.add_argument("--trace", help="per-iteration refinement CSV")
    p.add_argument("-o", "--out", default="-")
    _add_explain_options(p)
    common(p)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("sweep", help="fidelity over sparsity levels")
    p.add_argument("checkpoint")
    p.add_argument("dataset_dir")
    p.add_argument("--methods", default="flowx,random")
    p.add_argument("--levels", default=",".join(str(x) for x in DEFAULT_LEVELS))
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("-o", "--out", required=True, help="CSV path")
    p.add_argument("--summary", help="summary JSON path (default: next to the CSV)")
    _add_explain_options(p)
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle", help="exact Shapley oracle on a tiny graph")
    p.add_argument("graph", help="graph JSON file")
    p.add_argument("--checkpoint")
    p.add_argument("--additive", help="comma-separated coefficients of an additive stub game")
    p.add_argument("--num-layers", type=int, default=1, help="layers for the additive game")
    p.add_argument("--node", type=int, default=None)
    p.add_argument("--value", choices=("prob", "logit"), default="prob")
    p.add_argument("--mc-steps", type=int, default=30)
    p.add_argument("--max-players", type=int, default=EXACT_PLAYER_LIMIT)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("-o", "--out", default="-")
    common(p)
    p.set_defaults(func=cmd_oracle)
    return parser


def _apply_config(parser, argv) -> argparse.Namespace:
    """Parse ``argv``; when ``--config`` is given, file values become defaults."""
    args = parser.parse_args(argv)
    path = getattr(args, "config", None)
    if not path:
        return args
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise FileNotFoundError(f"config file {path} not found")
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for section in ("msgflow", args.command):
        if not cp.has_section(section):
            continue
        for key, raw in cp.items(section):
            dest = key.replace("-", "_")
            action = actions.get(dest)
            if action is None or not action.option_strings:
                raise UsageError(f"unknown option {key!r} in [{section}] of {path}")
            if isinstance(action, argparse._StoreTrueAction):
                defaults[dest] = cp.getboolean(section, key)
            elif action.type is not None:
                defaults[dest] = action.type(raw)
            else:
                defaults[dest] = raw
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"msgflow: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, configparser.Error, ValueError) as exc:
        print(f"msgflow: config error: {exc}", file=sys.stderr)
        return EXIT_DATA
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"msgflow: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"msgflow: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FlowOverflowError as exc:
        print(f"msgflow: flow overflow: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (OSError, GraphError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"msgflow: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
