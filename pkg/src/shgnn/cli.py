"""Command-line entry point (``shgnn`` / ``python -m shgnn``).

Exit codes: 0 success, 1 validation or configuration error, 2 numerical
failure.  Failures print one ``error: <kind>: <reason>`` line on stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .autodiff import grad_check
from .centrality import count_coverage, histogram_summary
from .config import ConfigError, TrainConfig
from .evaluate import (export_embeddings, kmeans_evaluate, read_embeddings, read_labels,
                       svm_evaluate)
from .hetgraph import DatasetError, load_dataset, save_dataset
from .metapath import MetaPath, build_tree, default_metapaths, enumerate_instances, tree_rows
from .model import SHGNN
from .synth import planted_dataset, random_hetero_graph
from .train import DivergenceError, fit


class UsageError(Exception):
    pass


def _write(path, text):
    Path(path).write_text(text, encoding="utf-8")


def _dump_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _metadata(out, command, started):
    _write(out / "metadata.json", _dump_json({
        "command": command, "version": __version__,
        "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
        "seconds": round(time.time() - started, 3),
    }))


def _resolve_config(args):
    cfg = TrainConfig.load(args.config) if getattr(args, "config", None) else TrainConfig()
    overrides = {}
    for key in ("seed", "epochs", "d1", "learning_rate"):
        v = getattr(args, key, None)
        if v is not None:
            overrides[key] = v
    return cfg.replace(**overrides) if overrides else cfg


def cmd_train(args):
    started = time.time()
    cfg = _resolve_config(args)
    ds = load_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "resolved_config.json", cfg.to_json())
    result = fit(ds, cfg)
    model = result.model
    model.save(out / "checkpoint.json")
    _write(out / "train_log.jsonl", result.log_jsonl())
    export_embeddings(model, out / "embeddings.tsv")

    g = ds.graph
    test = ds.splits["test"]
    emb = model.embeddings()[model.local_index(test)]
    y = g.labels[test]
    report = {
        "best_epoch": result.best_epoch,
        "test_accuracy": float((model.forward().probs[model.local_index(test)].argmax(1) == y).mean())
        if len(test) else None,
        "classification": svm_evaluate(emb, y, seed=cfg.seed).to_dict() if len(test) else None,
        "clustering": kmeans_evaluate(emb, y, g.num_classes, seed=cfg.seed).to_dict()
        if len(test) >= g.num_classes else None,
    }
    _write(out / "report.json", _dump_json(report))
    _metadata(out, "train", started)
    print(f"trained {len(result.log)} epochs, best epoch {result.best_epoch}; wrote {out}")


def cmd_eval(args):
    started = time.time()
    names, x = read_embeddings(args.embeddings)
    labels = read_labels(args.labels)
    keep = [i for i, n in enumerate(names) if n in labels]
    if not keep:
        raise UsageError("no embedding row has a label")
    x = x[keep]
    y = np.array([labels[names[i]] for i in keep])
    if args.task == "classification":
        report = svm_evaluate(x, y, seed=args.seed)
    else:
        report = kmeans_evaluate(x, y, args.k, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "report.json", report.to_json())
    settings = {"task": args.task, "seed": args.seed, "runs": report.runs}
    if args.task == "classification":
        settings["svm"] = {"lr": 0.01, "iterations": 500, "reg": 1e-3}
        settings["fractions"] = sorted(report.metrics)
    else:
        settings.update(k=report.extra["k"], restarts=10)
    _write(out / "resolved_config.json", _dump_json(settings))
    _metadata(out, "eval", started)
    print(f"wrote {out / 'report.json'}")


def cmd_enumerate(args):
    ds = load_dataset(args.data)
    g = ds.graph
    if args.target not in g.index:
        raise UsageError(f"unknown target node {args.target!r}")
    p = MetaPath.parse(args.metapath).validate(g.schema)
    target = g.index[args.target]
    lines = []
    for inst in enumerate_instances(g, p, target, args.cap):
        lines.append("\t".join(["instance", *(g.node_names[v] for v in inst)]))
    for depth, i, par, node in tree_rows(build_tree(g, p, target, args.cap), g.node_names):
        lines.append(f"tree\t{depth}\t{i}\t{par}\t{node}")
    text = "".join(line + "\n" for line in lines)
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)


def cmd_centrality(args):
    started = time.time()
    ds = load_dataset(args.data)
    g = ds.graph
    if args.metapath:
        paths = [MetaPath.parse(p) for p in args.metapath]
    elif args.config:
        paths = [MetaPath.parse(p) for p in TrainConfig.load(args.config).metapaths]
    else:
        paths = []
    paths = paths or default_metapaths(g.schema)
    for p in paths:
        p.validate(g.schema)
    table = count_coverage(g, paths)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = "".join(f"{g.node_names[v]}\t{table.c[v]}\t{table.c_plus[v]}\n"
                   for v in range(g.num_nodes))
    _write(out / "centrality.tsv", rows)
    summary = {"metapaths": [p.name for p in paths], "types": histogram_summary(g, table)}
    _write(out / "centrality_summary.json", _dump_json(summary))
    _write(out / "resolved_config.json", _dump_json({"metapaths": [p.name for p in paths]}))
    _metadata(out, "centrality", started)
    print(f"wrote {out / 'centrality.tsv'}")


def gradcheck_report(seed, tol=1e-5, step=1e-6, floor=1e-3):
    """Full-model gradient check on a 30-node random graph."""
    ds = random_hetero_graph(seed, n_m=12, n_a=10, n_d=8, dim=5)
    cfg = TrainConfig(d1=4, seed=seed, layers=2, metapaths=["M-A-M", "M-D-M"])
    model = SHGNN(ds.graph, cfg)
    names = list(model.params)
    tensors = [model.params[k] for k in names]
    train = ds.splits["train"]
    return grad_check(lambda *_: model.loss(model.forward(), train), tensors,
                      step=step, tol=tol, floor=floor, names=names)


def cmd_gradcheck(args):
    report = gradcheck_report(args.seed)
    print(report.line())
    if not report.passed:
        for r, name, idx, a, n in report.worst:
            print(f"  {name}{list(idx)} analytic={a:.6g} numeric={n:.6g} rel={r:.3g}")
        return 2
    return 0


def cmd_synth(args):
    started = time.time()
    ds = planted_dataset(args.seed, per_class=args.per_class)
    out = Path(args.out)
    save_dataset(ds, out)
    cfg = TrainConfig(d1=32, seed=args.seed, patience=0, metapaths=["M-A-M"])
    _write(out / "config.json", cfg.to_json())
    _metadata(out, "synth", started)
    print(f"wrote planted dataset to {out}")


def build_parser():
    ap = argparse.ArgumentParser(prog="shgnn", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--threads", type=int, default=1,
                    help="worker cap (computation is single-threaded)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--d1", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate an embeddings TSV")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--task", choices=("classification", "clustering"), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("enumerate", help="dump meta-path instances and the tree of one target")
    p.add_argument("--data", required=True)
    p.add_argument("--metapath", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--cap", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("centrality", help="coverage centralities as TSV + summary JSON")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--metapath", action="append")
    p.add_argument("--config")
    p.set_defaults(func=cmd_centrality)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full model")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="write the planted benchmark dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--per-class", dest="per_class", type=int, default=20)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        # argparse already printed usage; unknown flags are validation errors
        return 0 if exc.code == 0 else 1
    try:
        rc = args.func(args)
    except (DatasetError, ConfigError, UsageError, ValueError) as exc:
        print(f"error: validation: {exc}", file=sys.stderr)
        return 1
    except (DivergenceError, FloatingPointError) as exc:
        print(f"error: numerical: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 1
    return rc or 0


if __name__ == "__main__":
    sys.exit(main())
