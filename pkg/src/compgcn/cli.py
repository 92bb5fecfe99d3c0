"""Command-line entry point: ``compgcn {train,eval,prune,sweep,gradcheck,inspect}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .checks import run_suite
from .config import ConfigError, RunConfig, load_config
from .evaluation import evaluate_model
from .graph import (
    GraphError,
    augment,
    build_filter_index,
    categorize_relations,
    dataset_statistics,
    load_triples,
    prune_top_relations,
    write_triples,
)
from .training import (
    TrainingDiverged,
    grid_search,
    load_model,
    scalability_sweep,
    sweep_csv,
    train_graph_classification,
    train_link_prediction,
    train_node_classification,
    write_outputs,
)

GRADCHECK_TOL = 1e-4


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "dataset", None):
        cfg = replace(cfg, dataset=args.dataset)
    return cfg


def cmd_train(args) -> int:
    cfg = _load(args)
    if cfg.task == "link-prediction":
        if cfg.grid:
            cfg, result, runs = grid_search(cfg)
            for c, _, mrr in runs:
                print(f"lr={c.lr} batch={c.batch_size} K={c.model.num_layers} "
                      f"dropout={c.model.dropout}  valid MRR {mrr:.4f}")
            if args.out:
                write_outputs(args.out, cfg, result)
        else:
            result = train_link_prediction(cfg, out_dir=args.out)
        print(f"best epoch {result.best_epoch}")
        for name, rep in (("valid", result.valid_report), ("test", result.test_report)):
            if rep is not None:
                print(f"[{name}]")
                print(rep.format_table())
    elif cfg.task == "node-classification":
        res = train_node_classification(cfg)
        print(f"valid accuracy {res.valid_accuracy:.4f}")
        print(f"test accuracy {res.test_accuracy:.4f}")
        _write_json(args.out, {"valid_accuracy": res.valid_accuracy,
                               "test_accuracy": res.test_accuracy})
    else:
        res = train_graph_classification(cfg)
        print(f"accuracy {res.mean:.4f} +- {res.std:.4f} over {len(res.fold_accuracies)} folds")
        _write_json(args.out, {"fold_accuracies": res.fold_accuracies, "mean": res.mean,
                               "std": res.std})
    return 0


def _write_json(out, payload) -> None:
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / "report.json").write_text(json.dumps(payload, indent=2, sort_keys=True),
                                               encoding="utf-8")


def cmd_eval(args) -> int:
    model, cfg, _, _ = load_model(args.checkpoint)
    g = load_triples(args.dataset or cfg.dataset)
    ag = augment(g)
    rep = evaluate_model(model, ag, args.split, build_filter_index(g), cfg.score_fn,
                         cfg.transe_norm, categorize_relations(g))
    print(rep.to_json() if args.json else rep.format_table())
    return 0


def cmd_prune(args) -> int:
    g = prune_top_relations(load_triples(args.dataset), args.m)
    write_triples(g, args.out)
    s = dataset_statistics(g)
    print(f"Entities {s['entities']} / Relations {s['relations']} / Edges {s['edges']}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    seeds = args.seeds if args.seeds else [cfg.seed]
    rows = scalability_sweep(cfg, args.m or (), args.basis or (), seeds,
                             pruned_basis=args.pruned_basis)
    text = sweep_csv(rows)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "sweep.csv").write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def cmd_gradcheck(args) -> int:
    seed = 0 if args.seed is None else args.seed
    records = run_suite(seed, args.trials)
    worst = max(r.max_rel_error for r in records)
    if args.verbose:
        for r in records:
            print(f"{r.name:36s}{r.max_rel_error:.3e}")
    print(f"max relative error {worst:.3e}")
    return 0 if worst < GRADCHECK_TOL else 1


def cmd_inspect(args) -> int:
    s = dataset_statistics(load_triples(args.dataset))
    print(f"Entities {s['entities']} / Relations {s['relations']} / Edges {s['edges']}")
    if args.verbose:
        print(f"train {s['train']} / valid {s['valid']} / test {s['test']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="compgcn", description=__doc__)
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="run configuration (JSON)")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--device", choices=["cpu"], default="cpu")

    sp = sub.add_parser("train", help="train a model from a config")
    common(sp)
    sp.add_argument("--dataset", default=None, help="override the config's dataset path")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a saved checkpoint")
    sp.add_argument("checkpoint")
    sp.add_argument("--dataset", default=None)
    sp.add_argument("--split", choices=["train", "valid", "test"], default="test")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("prune", help="keep the m most frequent relations")
    sp.add_argument("dataset")
    sp.add_argument("--m", type=int, required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_prune)

    sp = sub.add_parser("sweep", help="relation-count and basis-size study")
    common(sp)
    sp.add_argument("--dataset", default=None)
    sp.add_argument("--m", type=int, nargs="*")
    sp.add_argument("--basis", type=int, nargs="*")
    sp.add_argument("--seeds", type=int, nargs="*")
    sp.add_argument("--pruned-basis", type=int, default=5)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    common(sp, config=False)
    sp.add_argument("--trials", type=int, default=20)
    sp.add_argument("-v", "--verbose", action="store_true")
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("inspect", help="print dataset statistics")
    sp.add_argument("dataset")
    sp.add_argument("-v", "--verbose", action="store_true")
    sp.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, GraphError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
