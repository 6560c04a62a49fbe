"""Experiment orchestration: per-fold training and evaluation, gradient
checks and the multi-seed loss comparison."""

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import batching, losses
from .data import augment_batch, load_csv, stratified_kfold, synth_gaussian_clusters
from .evaluation import EvalReport, evaluate_embeddings
from .model import AdamState, NonFiniteError, backward, embed, forward_batch, init_embedder, train_step
from .rng import make_rng

log = logging.getLogger(__name__)

LOSSES = ("contrastive", "triplet", "npair", "constellation")
METRICS = ("accuracy", "balanced_accuracy", "davies_bouldin", "silhouette")

# stream tags for make_rng(seed, fold, TAG, ...)
_INIT, _TRAIN, _VAL = 1, 2, 3


class ExperimentError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    # data: a CSV path, or the synthetic generator parameters below
    csv: str = None
    grid_shape: tuple = None
    synth_classes: int = 8
    synth_per_class: int = 80
    synth_dim: int = 16
    synth_sep: float = 4.0
    synth_sigma: float = 1.5
    data_seed: int = None  # defaults to seed
    # loss
    loss: str = "constellation"
    margin: float = 1.0
    alpha: float = 0.2
    K: int = 3
    mining: str = "semihard"
    # model
    hidden: tuple = (256, 128)
    embedding_dim: int = 128
    # training
    epochs: int = 10
    batch_classes: int = 8
    batch_per_class: int = 4
    lr: float = 1e-3
    augment: bool = True
    # protocol
    folds: int = 10
    knn_k: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}; choose from {LOSSES}")
        if self.mining not in batching.MINING_MODES:
            raise ValueError(f"unknown mining mode {self.mining!r}")
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.grid_shape is not None:
            self.grid_shape = tuple(int(g) for g in self.grid_shape)
        losses.LossHyper(self.margin, self.alpha, self.K)
        if self.epochs < 0 or self.folds < 2 or self.knn_k < 1:
            raise ValueError("epochs >= 0, folds >= 2 and knn_k >= 1 required")

    @property
    def normalize(self):
        return self.loss != "npair"

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d["grid_shape"] = list(self.grid_shape) if self.grid_shape else None
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class RunReport:
    config: dict
    folds: list
    untrained: list
    mean: dict
    std: dict
    curves: list
    fold_test_indices: list
    wall_clock_seconds: float = 0.0

    def to_dict(self):
        d = asdict(self)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["folds"] = [EvalReport.from_dict(r) for r in d["folds"]]
        d["untrained"] = [EvalReport.from_dict(r) for r in d["untrained"]]
        return cls(**d)

    def to_json(self):
        return dumps(self.to_dict())


def dumps(doc):
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def load_dataset(config):
    if config.csv:
        ds = load_csv(config.csv)
        if config.grid_shape:
            ds.grid_shape = tuple(config.grid_shape)
        return ds
    seed = config.seed if config.data_seed is None else config.data_seed
    return synth_gaussian_clusters(
        config.synth_classes,
        config.synth_per_class,
        config.synth_dim,
        config.synth_sep,
        config.synth_sigma,
        make_rng(seed),
    )


def aggregate(reports):
    """Per-metric mean and sample (n-1) standard deviation."""
    mean, std = {}, {}
    for m in METRICS:
        vals = np.array([getattr(r, m) for r in reports], dtype=np.float64)
        mean[m] = float(vals.mean())
        std[m] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
    return mean, std


def _batch_shape(config, labels):
    _, counts = np.unique(labels, return_counts=True)
    Q = min(config.batch_per_class, int(counts.max()))
    # only classes holding at least Q samples can fill a slot
    P = min(config.batch_classes, int(np.sum(counts >= Q)))
    if config.loss == "constellation" and P <= config.K:
        raise ValueError(f"K={config.K} needs batches with > K classes, only {P} available")
    return P, Q


def draw_batch(config, labels, rng):
    """Positions into ``labels`` for one batch plus a loss adapter for it.

    The adapter maps the batch's embeddings to a LossResult.
    """
    if config.loss == "npair":
        nb = batching.build_npair_batch(labels, rng)
        positions = nb.anchor_rows + nb.positive_rows
        n = len(nb)

        def adapter(E):
            res = losses.npair_loss(E[:n], E[n:])
            return res

        return positions, adapter

    P, Q = _batch_shape(config, labels)
    positions = batching.sample_balanced_batch(labels, P, Q, rng)
    lab = np.asarray(labels)[positions]

    if config.loss == "contrastive":
        pairs = batching.contrastive_pairs(lab)
        return positions, lambda E: losses.contrastive_loss(pairs, E, config.margin)

    if config.loss == "triplet":
        modes = {
            "semihard": ("semihard", "hard", "all_valid"),
            "hard": ("hard", "all_valid"),
            "all_valid": ("all_valid",),
        }[config.mining]

        def adapter(E):
            trips, _ = batching.mine_with_fallback(E, lab, config.alpha, modes)
            if not len(trips):
                return losses.LossResult(0.0, np.zeros_like(E))
            return losses.triplet_loss(trips, E, config.alpha)

        return positions, adapter

    kb = batching.build_constellation_batch(lab, config.K, rng)
    return positions, lambda E: losses.constellation_loss(kb, E, config.K)


def _batch_inputs(config, ds, X, positions, rng):
    xb = X[positions]
    if config.augment and ds.grid_shape is not None:
        xb = augment_batch(xb, ds.grid_shape, rng)
    return xb


def new_model(config, input_dim, rng):
    sizes = [input_dim, *config.hidden, config.embedding_dim]
    return init_embedder(sizes, config.normalize, rng)


def train_model(config, ds, train_idx, fold=0, val_idx=None):
    """Train a fresh model on ``train_idx``; returns (model, curve dict)."""
    X, y = ds.subset(train_idx)
    model = new_model(config, X.shape[1], make_rng(config.seed, fold, _INIT))
    state = AdamState.for_model(model, lr=config.lr)
    rng = make_rng(config.seed, fold, _TRAIN)
    per_batch = 2 * len(np.unique(y)) if config.loss == "npair" else math.prod(_batch_shape(config, y))
    steps = max(1, math.ceil(len(train_idx) / per_batch))
    curve = {"train": [], "val": []}
    for epoch in range(config.epochs):
        total = 0.0
        for _ in range(steps):
            positions, adapter = draw_batch(config, y, rng)
            xb = _batch_inputs(config, ds, X, positions, rng)
            total += train_step(model, state, xb, adapter)
        curve["train"].append(total / steps)
        if val_idx is not None:
            curve["val"].append(validation_loss(config, ds, val_idx, model, fold, epoch))
    return model, curve


def validation_loss(config, ds, val_idx, model, fold, epoch):
    """Loss of the frozen model on one seeded batch from the held-out split."""
    Xv, yv = ds.subset(val_idx)
    rng = make_rng(config.seed, fold, _VAL, epoch)
    positions, adapter = draw_batch(config, yv, rng)
    emb, _ = forward_batch(model, Xv[positions])
    return adapter(emb).value


def run_experiment(config, dataset=None):
    """k-fold protocol: train per fold, evaluate on the held-out fold, aggregate.

    Fold membership depends only on the dataset, ``folds`` and ``seed``, so
    runs that differ only in the loss see identical splits.
    """
    t0 = time.perf_counter()
    ds = dataset if dataset is not None else load_dataset(config)
    splits = stratified_kfold(ds.labels, config.folds, config.seed)
    fold_reports, untrained, curves = [], [], []
    for f, (tr, te) in enumerate(splits):
        phase = "setup"
        try:
            Xtr, ytr = ds.subset(tr)
            Xte, yte = ds.subset(te)
            phase = "baseline"
            init = new_model(config, Xtr.shape[1], make_rng(config.seed, f, _INIT))
            untrained.append(
                evaluate_embeddings(embed(init, Xtr), ytr, embed(init, Xte), yte, config.knn_k, ds.n_classes)
            )
            phase = "train"
            model, curve = train_model(config, ds, tr, fold=f, val_idx=te)
            phase = "eval"
            fold_reports.append(
                evaluate_embeddings(embed(model, Xtr), ytr, embed(model, Xte), yte, config.knn_k, ds.n_classes)
            )
        except Exception as exc:
            raise ExperimentError(f"fold {f} ({phase}): {exc}") from exc
        curves.append(curve)
        log.info("fold %d/%d %s: %s", f + 1, config.folds, config.loss, fold_reports[-1])
    mean, std = aggregate(fold_reports)
    return RunReport(
        config=config.to_dict(),
        folds=fold_reports,
        untrained=untrained,
        mean=mean,
        std=std,
        curves=curves,
        fold_test_indices=[te.tolist() for _, te in splits],
        wall_clock_seconds=time.perf_counter() - t0,
    )


# -- gradient checks ---------------------------------------------------------

GRAD_TOL_EMBEDDING = 1e-6
GRAD_TOL_PARAMETER = 1e-5
_KINK_BAND = 1e-3


def _random_problem(loss, rng):
    """A random (labels, adapter) instance, or None if it sits near a kink.

    ``adapter(E)`` returns a LossResult for embedding matrix E.
    """
    if loss == "contrastive":
        labels = np.repeat(np.arange(3), 2)
        pairs = batching.contrastive_pairs(labels)
        return labels, lambda E: losses.contrastive_loss(pairs, E, 1.0)
    if loss == "triplet":
        labels = np.repeat(np.arange(3), 2)
        trips = batching.TripletIndexSet(
            [(a, p, n) for a in range(6) for p in range(6) for n in range(6)
             if a != p and labels[a] == labels[p] and labels[n] != labels[a]]
        )
        return labels, lambda E: losses.triplet_loss(trips, E, 0.2)
    if loss == "npair":
        labels = np.tile(np.arange(4), 2)
        return labels, lambda E: losses.npair_loss(E[:4], E[4:])
    if loss == "constellation":
        labels = np.repeat(np.arange(6), 2)
        kb = batching.build_constellation_batch(labels, 4, rng)
        return labels, lambda E: losses.constellation_loss(kb, E, 4)
    raise ValueError(f"unknown loss {loss!r}")


def _near_kink(loss, E, labels, margin=1.0, alpha=0.2):
    if loss == "contrastive":
        D = np.sqrt(batching.pairwise_sq_dists(E))
        iu = np.triu_indices(len(E), 1)
        return bool(np.any(D[iu] < _KINK_BAND))
    if loss == "triplet":
        D = batching.pairwise_sq_dists(E)
        n = len(E)
        for a in range(n):
            for p in range(n):
                if a == p or labels[a] != labels[p]:
                    continue
                for q in range(n):
                    if labels[q] != labels[a] and abs(D[a, p] - D[a, q] + alpha) < _KINK_BAND:
                        return True
    return False


def check_embedding_gradient(loss, rng, corrupt=False):
    labels, adapter = _random_problem(loss, rng)
    dim = 8 if loss in ("npair", "constellation") else 4
    while True:
        E = 0.5 * rng.standard_normal((len(labels), dim))
        if not _near_kink(loss, E, labels):
            break
    analytic = adapter(E).grad
    if corrupt:
        analytic = analytic * (1.0 + 1e-3)
    numeric = losses.finite_diff_grad(lambda Z: adapter(Z).value, E)
    return losses.max_rel_error(analytic, numeric)


def check_parameter_gradient(loss, rng, corrupt=False, sizes=(2, 3, 2)):
    """Backprop vs central differences over every network parameter."""
    labels, adapter = _random_problem(loss, rng)
    normalize = loss != "npair"
    while True:
        model = init_embedder(list(sizes), normalize, rng)
        for b in model.biases:
            b[:] = 0.3 * rng.standard_normal(b.shape)
        X = rng.standard_normal((len(labels), sizes[0]))
        emb, cache = forward_batch(model, X)
        pre_acts = [cache["acts"][i] @ W + b for i, (W, b) in enumerate(zip(model.weights, model.biases))]
        relu_kink = any(np.any(np.abs(z) < _KINK_BAND) for z in pre_acts[:-1])
        if not relu_kink and not _near_kink(loss, emb, labels):
            break
    grads = backward(model, cache, adapter(emb).grad)
    params = model.parameters()
    worst = 0.0
    for p, g in zip(params, grads):
        def f(value, p=p):
            saved = p.copy()
            p[...] = value
            out = adapter(forward_batch(model, X)[0]).value
            p[...] = saved
            return out

        numeric = losses.finite_diff_grad(f, p)
        if corrupt:
            g = g * (1.0 + 1e-3)
        worst = max(worst, losses.max_rel_error(g, numeric))
    return worst


def gradcheck(loss_names, seed=0, instances=100, corrupt=False):
    """Run both gradient checks for each loss.

    Returns a list of dicts with the worst relative error per space and a
    ``passed`` flag.
    """
    results = []
    for name in loss_names:
        rng = make_rng(seed, LOSSES.index(name))
        emb_err = max(check_embedding_gradient(name, rng, corrupt) for _ in range(instances))
        par_err = max(check_parameter_gradient(name, rng, corrupt) for _ in range(instances))
        results.append(
            {
                "loss": name,
                "instances": instances,
                "embedding_max_rel_err": emb_err,
                "parameter_max_rel_err": par_err,
                "passed": emb_err < GRAD_TOL_EMBEDDING and par_err < GRAD_TOL_PARAMETER,
            }
        )
    return results


# -- benchmark ---------------------------------------------------------------

BENCHMARK_DEFAULTS = dict(
    synth_classes=8,
    synth_per_class=80,
    synth_dim=16,
    synth_sep=4.0,
    synth_sigma=1.5,
    embedding_dim=32,
    epochs=10,
)


def benchmark(base, seeds, loss_names=LOSSES):
    """Run every loss for every master seed and summarise orderings.

    ``base`` is an ExperimentConfig whose loss/seed fields are overridden.
    Per-run wall-clock is dropped so the output is reproducible.
    """
    runs = []
    for seed in seeds:
        for name in loss_names:
            cfg = ExperimentConfig.from_dict({**base.to_dict(), "loss": name, "seed": int(seed)})
            try:
                rep = run_experiment(cfg)
                runs.append(
                    {
                        "seed": int(seed),
                        "loss": name,
                        "finite": True,
                        "mean": rep.mean,
                        "std": rep.std,
                        "untrained_mean": aggregate(rep.untrained)[0],
                        "final_train_loss": [c["train"][-1] if c["train"] else None for c in rep.curves],
                    }
                )
            except ExperimentError as exc:
                if not isinstance(exc.__cause__, NonFiniteError):
                    raise
                runs.append({"seed": int(seed), "loss": name, "finite": False, "error": str(exc)})
            log.info("benchmark seed=%s loss=%s done", seed, name)
    return {"config": base.to_dict(), "seeds": [int(s) for s in seeds], "runs": runs}


def ordering_summary(result, better="constellation", worse="triplet", metric="silhouette"):
    """Count seeds where ``better`` scores at least as high as ``worse``."""
    by = {(r["seed"], r["loss"]): r for r in result["runs"]}
    wins = []
    for s in result["seeds"]:
        a, b = by.get((s, better)), by.get((s, worse))
        if a and b and a["finite"] and b["finite"]:
            wins.append(a["mean"][metric] >= b["mean"][metric])
    return {"better": better, "worse": worse, "metric": metric, "wins": int(sum(wins)), "of": len(wins)}
