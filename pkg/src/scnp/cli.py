"""``scnp`` command line.

Exit codes:

====  =====================================
0     success
2     configuration error (bad flag, config key, empty grid)
3     input/output error (missing or malformed file)
4     numeric error (singular system, shape mismatch, ...)
====  =====================================

Settings are resolved as defaults < ``--preset`` < ``--config`` < flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .datasets import extract_lcc, load_dataset_dir, make_split, save_node_map, save_split
from .errors import ConfigError, ScnpError
from .evaluation import accuracy, macro_f1
from .experiment import (
    _atomic_text,
    build_models,
    dataset_checksum,
    history_name,
    load_experiment_dataset,
    precompute,
    preset_names,
    resolve_config,
    sweep,
)
from .pipelines import ModelKind, predict, train, write_history
from .report import report
from .storage import save_checkpoint

log = logging.getLogger("scnp")

EXIT_CODES = {"config": 2, "io": 3, "numeric": 4}


def _experiment_flags():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("experiment")
    g.add_argument("--dataset-dir", help="directory with edges.tsv, features.tsv, labels.tsv")
    g.add_argument("--config", help="key = value config file")
    g.add_argument("--preset", help=f"bundled preset ({', '.join(preset_names())})")
    g.add_argument("--alpha", type=float, help="teleport probability (default 0.1)")
    g.add_argument("--epsilon", dest="epsilons", type=float, action="append", help="pruning threshold (repeatable)")
    g.add_argument("--model", dest="models", action="append", help="gcn, ppnp, appnp or scnp (repeatable)")
    g.add_argument("--epochs", type=int, action="append", help="epoch budget (repeatable)")
    g.add_argument("--runs", type=int, help="seeds per cell (default 10)")
    g.add_argument("--seed", type=int, help="base seed (default 0)")
    g.add_argument("--out", help="output directory")
    g.add_argument("--k", type=int, help="APPNP power steps (default 10)")
    g.add_argument("--per-class-train", type=int, help="training nodes per class (default 20)")
    g.add_argument("--val-size", type=int, help="validation nodes (default 500)")
    g.add_argument("--hidden", type=int, help="hidden units (default 64)")
    g.add_argument("--lr", type=float, help="Adam learning rate (default 0.01)")
    g.add_argument("--l2", type=float, help="L2 weight on the first layer (default 0.005)")
    g.add_argument("--dropout", type=float, help="dropout rate (default 0.5)")
    g.add_argument("--workers", type=int, help="worker threads (default 1)")
    g.add_argument("--literal-algorithm1", dest="literal_algorithm1", action="store_const", const=True,
                   help="fill the correlation matrix as L + L^T, diagonal included")
    g.add_argument("--no-adjacency-dropout", dest="adjacency_dropout", action="store_const", const=False)
    g.add_argument("--no-lcc", dest="lcc", action="store_const", const=False,
                   help="keep all components instead of the largest one")
    g.add_argument("--row-normalize", dest="row_normalize", action="store_const", const=True)
    return p


_OVERRIDES = (
    "dataset_dir", "alpha", "epsilons", "models", "epochs", "runs", "seed", "out", "k",
    "per_class_train", "val_size", "hidden", "lr", "l2", "dropout", "workers",
    "literal_algorithm1", "adjacency_dropout", "lcc", "row_normalize",
)


def _config(args):
    return resolve_config(args.preset, args.config, {k: getattr(args, k) for k in _OVERRIDES})


def cmd_precompute(args):
    cfg = _config(args)
    paths = precompute(cfg)
    out = Path(cfg.out)
    _atomic_text(out / "artifacts" / "config.cfg", cfg.to_text({"inputs": dataset_checksum(cfg.dataset_dir)}))
    print(json.dumps({"ppr": str(paths["ppr"]), "sigma": {repr(k): str(v) for k, v in paths["sigma"].items()}}, indent=1))
    return 0


def cmd_train(args):
    cfg = _config(args)
    kinds = cfg.kinds
    if len(kinds) != 1:
        raise ConfigError("train takes exactly one --model")
    kind = kinds[0]
    if kind.uses_epsilon and len(cfg.epsilon_grid) != 1:
        raise ConfigError("train takes exactly one --epsilon")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    inputs = dataset_checksum(cfg.dataset_dir)
    h = cfg.config_hash(inputs)
    d = load_experiment_dataset(cfg)
    paths = precompute(cfg, d, inputs, cfg.epsilon_grid if kind.uses_epsilon else []) \
        if kind in (ModelKind.PPNP, ModelKind.SCNP) else {}
    eps = cfg.epsilon_grid[0] if kind.uses_epsilon else None
    model = build_models(cfg, d, paths)[(kind, eps)]
    split = make_split(d, cfg.per_class_train, cfg.val_size, cfg.seed)
    result = train(model, d, split, cfg.train_config(cfg.seed, max(cfg.epochs)))
    probs = predict(model, d.features, result.params)
    metrics = {
        "model": kind.value, "epsilon": eps, "seed": cfg.seed, "epochs": len(result.history),
        "train_acc": accuracy(probs, d.labels, split.train_idx),
        "test_acc": accuracy(probs, d.labels, split.test_idx) if len(split.test_idx) else None,
        "macro_f1": macro_f1(probs, d.labels, split.test_idx) if len(split.test_idx) else None,
    }
    write_history(out / history_name(kind, eps, cfg.seed), result, dict(metrics, config_hash=h))
    save_checkpoint(out / "checkpoint.scnpckp", result.params.as_dict(),
                    {"config": cfg.to_text(), "config_hash": h, "model": kind.value})
    save_split(split, out / "split.txt")
    _atomic_text(out / "config.cfg", cfg.to_text({"config_hash": h, "inputs": inputs}))
    print(json.dumps(dict(metrics, wall_time=round(result.wall_time, 3)), sort_keys=True))
    return 0


def cmd_sweep(args):
    cfg = _config(args)
    rows = sweep(cfg, force=args.force)
    failed = sum(1 for r in rows if r["error"])
    log.info("%d rows in %s (%d failed)", len(rows), Path(cfg.out) / "results.csv", failed)
    return 0


def cmd_report(args):
    files = report(args.results, args.out, args.force, args.csv_only)
    for f in files:
        print(f)
    return 0


def cmd_validate(args):
    if not args.dataset_dir:
        raise ConfigError("validate-dataset needs --dataset-dir")
    d = load_dataset_dir(args.dataset_dir)
    lcc = extract_lcc(d)
    counts = np.bincount(d.labels, minlength=d.num_classes)
    deg = np.bincount(np.concatenate([d.graph.src, d.graph.dst]), minlength=d.n)
    info = {
        "name": d.name, "nodes": d.n, "edges": d.graph.m, "classes": d.num_classes,
        "features": d.num_features, "isolated_nodes": int(np.sum(deg == 0)),
        "lcc_nodes": lcc.n, "lcc_edges": lcc.graph.m,
        "class_counts": {name: int(c) for name, c in zip(d.class_names or range(d.num_classes), counts)},
    }
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        save_node_map(d, Path(args.out) / "node_map.tsv")
    print(json.dumps(info, indent=1))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="scnp", description="Graph node classification experiments")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-q", "--quiet", action="store_true", help="only log warnings and errors")
    exp = _experiment_flags()

    s = sub.add_parser("precompute", parents=[common, exp], help="build the PPR matrix and one correlation matrix per epsilon")
    s.set_defaults(func=cmd_precompute)
    s = sub.add_parser("train", parents=[common, exp], help="train a single model and seed")
    s.set_defaults(func=cmd_train)
    s = sub.add_parser("sweep", parents=[common, exp], help="run the models x epsilons x seeds grid")
    s.add_argument("--force", action="store_true", help="discard results from a different config")
    s.set_defaults(func=cmd_sweep)
    s = sub.add_parser("report", parents=[common], help="summary CSV and SVG charts from sweep directories")
    s.add_argument("results", nargs="+", help="sweep output directories")
    s.add_argument("--out", help="report directory (default <first>/report)")
    s.add_argument("--force", action="store_true", help="combine results with differing config hashes")
    s.add_argument("--csv-only", action="store_true", help="skip the SVG charts")
    s.set_defaults(func=cmd_report)
    s = sub.add_parser("validate-dataset", parents=[common], help="parse a dataset directory and print its statistics")
    s.add_argument("--dataset-dir")
    s.add_argument("--out", help="write node_map.tsv here")
    s.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(format="%(levelname)s %(message)s", stream=sys.stderr)
    log.setLevel(logging.WARNING if args.quiet else logging.INFO)
    try:
        return args.func(args)
    except ScnpError as e:
        log.error("%s", e)
        return EXIT_CODES.get(e.category, 4)
    except OSError as e:
        log.error("%s", e)
        return 3


if __name__ == "__main__":
    sys.exit(main())
