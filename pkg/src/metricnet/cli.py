"""Command line entry point: ``metricnet <command> ...``."""

import argparse
import json
import logging
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import harness
from .data import load_csv, save_csv, stratified_kfold, synth_gaussian_clusters
from .evaluation import classification_scores, davies_bouldin, evaluate_embeddings, knn_classify, pca_project_2d, silhouette, write_scatter_csv
from .model import embed, load_checkpoint, save_checkpoint
from .rng import make_rng

_TUPLE_FIELDS = {"hidden", "grid_shape"}


def _add_config_args(p):
    p.add_argument("--config", help="JSON file holding a full experiment config")
    for f in fields(harness.ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.name == "seed":
            continue  # added by every command
        if f.name in _TUPLE_FIELDS:
            p.add_argument(flag, type=int, nargs="+", default=None)
        elif f.type is bool:
            p.add_argument(flag, type=lambda s: s.lower() in ("1", "true", "yes"), default=None)
        else:
            p.add_argument(flag, type=f.type if f.type in (int, float) else str, default=None)


def _config_from_args(args, defaults=None):
    doc = dict(defaults or {})
    if args.config:
        doc.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
    for f in fields(harness.ExperimentConfig):
        val = getattr(args, f.name, None)
        if val is not None:
            doc[f.name] = val
    return harness.ExperimentConfig.from_dict(doc)


def _seed(args):
    return 0 if args.seed is None else args.seed


def _write_json(doc, out):
    text = harness.dumps(doc)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_gen_data(args):
    ds = synth_gaussian_clusters(args.classes, args.per_class, args.dim, args.sep, args.sigma, make_rng(_seed(args)))
    save_csv(ds, args.out)
    return 0


def cmd_train(args):
    cfg = _config_from_args(args)
    t0 = time.perf_counter()
    ds = harness.load_dataset(cfg)
    tr, te = stratified_kfold(ds.labels, cfg.folds, cfg.seed)[args.fold]
    model, curve = harness.train_model(cfg, ds, tr, fold=args.fold, val_idx=te)
    if args.checkpoint:
        save_checkpoint(model, args.checkpoint)
    Xtr, ytr = ds.subset(tr)
    Xte, yte = ds.subset(te)
    report = evaluate_embeddings(embed(model, Xtr), ytr, embed(model, Xte), yte, cfg.knn_k, ds.n_classes)
    _write_json(
        {
            "config": cfg.to_dict(),
            "fold": args.fold,
            "metrics": report.to_dict(),
            "curve": curve,
            "wall_clock_seconds": time.perf_counter() - t0,
        },
        args.out,
    )
    return 0


def _leave_one_out_knn(emb, labels, k):
    preds = np.empty(len(labels), dtype=np.int64)
    idx = np.arange(len(labels))
    for i in idx:
        rest = idx != i
        preds[i] = knn_classify(emb[rest], labels[rest], emb[i : i + 1], k)[0]
    return preds


def cmd_eval(args):
    model = load_checkpoint(args.checkpoint)
    ds = load_csv(args.data)
    emb = embed(model, ds.features)
    if args.reference:
        ref = load_csv(args.reference)
        pred = knn_classify(embed(model, ref.features), ref.labels, emb, args.k)
        knn_mode = "reference"
    else:
        pred = _leave_one_out_knn(emb, ds.labels, args.k)
        knn_mode = "leave_one_out"
    acc, bac, recall = classification_scores(pred, ds.labels, ds.n_classes)
    _write_json(
        {
            "checkpoint": str(args.checkpoint),
            "data": str(args.data),
            "knn": {"k": args.k, "mode": knn_mode},
            "metrics": {
                "accuracy": acc,
                "balanced_accuracy": bac,
                "davies_bouldin": davies_bouldin(emb, ds.labels),
                "silhouette": silhouette(emb, ds.labels),
                "per_class_recall": recall,
            },
        },
        args.out,
    )
    return 0


def cmd_project(args):
    model = load_checkpoint(args.checkpoint)
    ds = load_csv(args.data)
    pts = pca_project_2d(embed(model, ds.features))
    write_scatter_csv(pts, ds.labels, args.out, ds.label_names)
    return 0


def cmd_gradcheck(args):
    names = list(harness.LOSSES) if args.loss == "all" else [args.loss]
    results = harness.gradcheck(names, _seed(args), args.instances, corrupt=args.corrupt)
    for r in results:
        status = "PASS" if r["passed"] else "FAIL"
        print(
            f"{status} {r['loss']}: embedding max rel err {r['embedding_max_rel_err']:.3e} "
            f"(< {harness.GRAD_TOL_EMBEDDING:g}), parameter max rel err "
            f"{r['parameter_max_rel_err']:.3e} (< {harness.GRAD_TOL_PARAMETER:g}) "
            f"over {r['instances']} instances"
        )
    if args.out:
        _write_json({"seed": _seed(args), "results": results}, args.out)
    return 0 if all(r["passed"] for r in results) else 1


def cmd_benchmark(args):
    cfg = _config_from_args(args, defaults=harness.BENCHMARK_DEFAULTS)
    seeds = args.seeds if args.seeds else [cfg.seed + i for i in range(5)]
    result = harness.benchmark(cfg, seeds, args.losses)
    result["ordering"] = harness.ordering_summary(result)
    _write_json(result, args.out)
    return 0


def cmd_run(args):
    cfg = _config_from_args(args)
    report = harness.run_experiment(cfg)
    _write_json(report.to_dict(), args.out)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="metricnet", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
        p.set_defaults(func=func)
        return p

    p = add("gen-data", cmd_gen_data, "write a synthetic Gaussian-cluster dataset as CSV")
    p.add_argument("--classes", type=int, default=8)
    p.add_argument("--per-class", type=int, default=80)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--sep", type=float, default=4.0)
    p.add_argument("--sigma", type=float, default=1.5)
    p.add_argument("--out", required=True)

    p = add("train", cmd_train, "train on one fold's train split and evaluate on its test split")
    _add_config_args(p)
    p.add_argument("--fold", type=int, default=0)
    p.add_argument("--checkpoint", help="where to save the trained model")
    p.add_argument("--out")

    p = add("run", cmd_run, "full k-fold protocol; writes a run report")
    _add_config_args(p)
    p.add_argument("--out")

    p = add("eval", cmd_eval, "metrics for a checkpoint on a CSV dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--reference", help="CSV whose embeddings the k-NN is fitted on (default: leave-one-out)")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--out")

    p = add("project", cmd_project, "PCA scatter (x,y,label) of a checkpoint's embeddings")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    p = add("gradcheck", cmd_gradcheck, "analytic vs finite-difference gradients")
    p.add_argument("--loss", choices=[*harness.LOSSES, "all"], default="all")
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)
    p.add_argument("--out")

    p = add("benchmark", cmd_benchmark, "multi-seed loss comparison on the synthetic benchmark")
    _add_config_args(p)
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--losses", nargs="+", choices=harness.LOSSES, default=list(harness.LOSSES))
    p.add_argument("--out")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
